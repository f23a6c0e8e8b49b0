use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "randslack_py").unwrap();
        randslack_py::randslack_py(&m).unwrap();
        let locals = PyDict::new(py);
        locals.set_item("rs", m).unwrap();
        if let Err(e) = py.run(code, None, Some(&locals)) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn spaces_and_oracles() {
    with_module(
        c"
t = rs.Space.tree(4)
assert t.output_count() == 64 and t.kind == 'tree'
assert abs(t.beta() - 2 / 3) < 1e-15
assert rs.Space.perm(3).distortion('0,1,2', '1,2,0') == 1.0
assert rs.derangement_count(8) == 14833
assert rs.verify_beta(rs.Space.dag(4, 2)) == (3, 60, False)
assert rs.proposal_set_size(2 / 3, 0.0, 0.0, 100) == 6
try:
    rs.Space.dag(4, 3)
    raise AssertionError('accepted')
except ValueError:
    pass
",
    );
}

#[test]
fn train_and_decode() {
    with_module(
        c"
d = rs.Dataset.synthetic(rs.Space.set(6, 2), 12, seed=4)
assert d.audit() == []
m = rs.train(d, method='all', iterations=5)
a = rs.train(d, method='all', iterations=5)
assert m.weights == a.weights and m.method == 'all'
y, h, s = rs.decode(m.weights, d, 3)
assert len(y.split(',')) == 2
",
    );
}
