use rcis::plot::{series_svg, trace_figures, Table};

const CSV: &str = "t,mode,s,i,u1,u2,x5,x6\n0,track_path,1,2,0.1,0.5,-2,-50\n0.1,track_path,1,1,0.2,0.4,-1.9,-49\n0.2,cruise,-1,-1,0.0,0.0,-1.8,-48\n";

#[test]
fn table_columns() {
    let t = Table::parse(CSV).unwrap();
    assert_eq!(t.column("x6").unwrap(), vec![-50.0, -49.0, -48.0]);
    assert!(t.column("nope").is_err());
}

#[test]
fn svg_is_deterministic_and_well_formed() {
    let t = [0.0, 1.0, 2.0];
    let y = [1.0, f64::NAN, 3.0];
    let a = series_svg("x", "m", &t, &[("y", &y)]);
    assert_eq!(a, series_svg("x", "m", &t, &[("y", &y)]));
    assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
}

#[test]
fn trace_figures_are_named() {
    let figs = trace_figures(CSV).unwrap();
    let names: Vec<&str> = figs.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["x5.svg", "x6.svg", "u.svg", "i.svg"]);
}
