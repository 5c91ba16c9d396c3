use std::ffi::CString;
use std::sync::Once;

use pyfracvi::pyfracvi;
use pyo3::prelude::*;

static INIT: Once = Once::new();

fn run(code: &str) -> PyResult<()> {
    INIT.call_once(|| pyo3::append_to_inittab!(pyfracvi));
    Python::with_gil(|py| py.run(&CString::new(code).unwrap(), None, None))
}

#[test]
fn operators_round_trip_through_lists() {
    run(r#"
import math, pyfracvi as fv
g = fv.Grid(2, 3.0, 16)
u = [math.sin(i * 0.37) for i in range(len(g))]
w = fv.frac_gradient(g, u, 0.4)
assert len(w) == 2 and len(w[0]) == 256
lap = fv.frac_laplacian(g, u, 0.4)
div = fv.frac_divergence(g, w, 0.4)
assert max(abs(a + b) for a, b in zip(lap, div)) < 1e-10 * max(abs(a) for a in lap)
"#)
    .unwrap();
}

#[test]
fn solver_errors_carry_reason_strings() {
    run(r#"
import pyfracvi as fv
try:
    fv.Grid(1, 2.0, 12)
    raise SystemExit("accepted a non power-of-two grid")
except fv.FracviError as e:
    assert e.args[0] == "invalid_grid", e.args
try:
    fv.vi_instance("nope")
    raise SystemExit("accepted an unknown instance")
except fv.FracviError as e:
    assert e.args[0] == "invalid_parameter"
"#)
    .unwrap();
}

#[test]
fn shipped_vi_matches_oracle_and_reports_studies() {
    run(r#"
import pyfracvi as fv
p = fv.vi_instance("inactive_1d")
s = p.solve()
o = p.oracle_solve()
d = p.hsigma_norm([a - b for a, b in zip(s.u, o)]) / p.hsigma_norm(o)
assert d < 1e-3, d
r = p.penalty_trace_study()
assert r.kind == "penalty_trace" and r.passed, r.summary()
assert "eps" in r.columns and len(r.rows) >= 1
"#)
    .unwrap();
}
