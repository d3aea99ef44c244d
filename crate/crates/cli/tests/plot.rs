use gva_cli::plot::{render, render_table, Panel, PlotSpec, Series};
use gva_cli::tables::{fmt_f64, Table};
use gva_cli::CliError;
use proptest::prelude::*;

fn xy(points: &[(f64, f64)]) -> Table {
    let mut t = Table::new(&["x", "y"]);
    for (x, y) in points {
        t.push(vec![fmt_f64(*x), fmt_f64(*y)]);
    }
    t
}

fn count(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

#[test]
fn empty_data_says_no_data() {
    let svg = render_table(&xy(&[]), PlotSpec::Xy).unwrap();
    assert!(svg.contains("no data"));
    assert_eq!(count(&svg, r#"class="series""#), 0);
    let nan = render_table(&xy(&[(f64::NAN, 1.0)]), PlotSpec::Xy).unwrap();
    assert!(nan.contains("no data"));
}

#[test]
fn series_element_depends_on_point_count() {
    let one = render_table(&xy(&[(0.0, 0.0)]), PlotSpec::Xy).unwrap();
    assert_eq!(count(&one, r#"<circle class="series""#), 1);
    let two = render_table(&xy(&[(0.0, 0.0), (1.0, 1.0)]), PlotSpec::Xy).unwrap();
    assert_eq!(count(&two, r#"<line class="series""#), 1);
    assert!(!two.contains("no data"));
    let many = render_table(&xy(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)]), PlotSpec::Xy).unwrap();
    assert_eq!(count(&many, r#"<polyline class="series""#), 1);
}

#[test]
fn document_shape() {
    let svg = render(&[Panel::default(), Panel::default()]);
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1120\""));
    assert!(svg.ends_with("</svg>\n"));
    assert_eq!(count(&svg, r#"<g class="panel">"#), 2);
    let titled = render(&[Panel { title: "a<b & c".into(), ..Panel::default() }]);
    assert!(titled.contains("a&lt;b &amp; c"));
}

#[test]
fn missing_columns_and_unknown_specs_are_errors() {
    assert!(matches!(render_table(&Table::new(&["x"]), PlotSpec::Xy), Err(CliError::Data(_))));
    assert!(render_table(&xy(&[(0.0, 1.0)]), PlotSpec::RewardCurves).is_err());
    assert!(matches!(PlotSpec::parse("pie"), Err(CliError::Config(_))));
    for n in PlotSpec::NAMES {
        PlotSpec::parse(n).unwrap();
    }
}

#[test]
fn reward_curves_draw_seeds_and_means() {
    let mut t = Table::new(&["step", "seed", "raw_reward", "ema_reward", "raw_diverged", "ema_diverged"]);
    for step in [0.0, 10.0, 20.0] {
        for seed in 0..3 {
            let r = -(step + seed as f64);
            t.push(vec![fmt_f64(step), seed.to_string(), fmt_f64(r), fmt_f64(r / 2.0), "0".into(), "0".into()]);
        }
    }
    let svg = render_table(&t, PlotSpec::RewardCurves).unwrap();
    assert_eq!(count(&svg, r#"<g class="panel">"#), 2);
    assert_eq!(count(&svg, "<circle cx="), 18);
    assert_eq!(count(&svg, r#"<polyline class="series""#), 2);
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..40)
}

proptest! {
    #[test]
    fn rendering_is_byte_deterministic(p in points()) {
        let t = xy(&p);
        let a = render_table(&t, PlotSpec::Xy).unwrap();
        let b = render_table(&t.clone(), PlotSpec::Xy).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(!a.contains("NaN") && !a.contains("inf"));
    }

    #[test]
    fn plotted_coordinates_stay_inside_the_canvas(p in points()) {
        let svg = render(&[Panel { lines: vec![Series { label: "s".into(), points: p }], ..Panel::default() }]);
        for chunk in svg.split(r#"points=""#).skip(1) {
            let body = chunk.split('"').next().unwrap();
            for pair in body.split(' ') {
                let (x, y) = pair.split_once(',').unwrap();
                let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
                prop_assert!((0.0..=560.0).contains(&x) && (0.0..=360.0).contains(&y), "{x},{y}");
            }
        }
    }
}
