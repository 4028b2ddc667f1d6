//! Drives the module through an embedded interpreter.

use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(body: &str) {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(dcsi::dcsi)(py);
        let globals = PyDict::new(py);
        globals.set_item("dcsi", module).unwrap();
        let code = CString::new(body).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.display(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn reference_table() {
    run(r#"
rows = ";".join(",".join("0" if (i, j) == (0, 0) else "0.3" if (i, j) == (4, 5) else "1"
                         for j in range(7)) for i in range(7))
t = {r["scheme"]: round(r["total"], 9) for r in dcsi.dof_table(rows)}
assert [t[s] for s in ("czf", "bzf", "apzf", "czf-hq", "apzf-hq")] == [0, 0, 2.1, 5.3, 6.3], t
"#);
}

#[test]
fn undefined_points_become_none() {
    run(r#"
c = dcsi.simulate("1,0.5;0,0.7", "apzf", [0.0, 30.0], trials=50, seed=3)
assert c["sum_rate"][0] is None and c["sum_rate"][1] > 0
"#);
}

#[test]
fn errors_map_to_exception_classes() {
    run(r#"
for call, exc in [(lambda: dcsi.ScalingMatrix("1,2;3"), dcsi.DcsiError),
                  (lambda: dcsi.Codebook(2, 40), dcsi.ResourceCapError)]:
    try:
        call()
    except exc:
        pass
    else:
        raise AssertionError(exc)
assert issubclass(dcsi.DcsiError, ValueError)
"#);
}

#[test]
fn codebook_round_trip() {
    run(r#"
cb = dcsi.Codebook(3, 5, seed=9)
h = dcsi.sample_channel(3, seed=1)[0]
q = cb.quantize(h)
back = dcsi.Codebook.from_json(cb.to_json())
assert back.vectors() == cb.vectors() and back.quantize(h)["index"] == q["index"]
"#);
}
