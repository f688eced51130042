use std::ffi::CStr;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &CStr) {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(sensegloss_py::sensegloss_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("sg", module).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.display(py);
            panic!("python assertion failed: {e}");
        }
    });
}

#[test]
fn metrics_round_trip() {
    run(c"
assert sg.tokenize('A unit of a living organism') == ['a', 'unit', 'of', 'a', 'living', 'organism']
b = sg.sentence_bleu(['the', 'cat', 'sat'], ['the', 'cat', 'sat', 'down'])
assert abs(b.score - 0.716531) < 5e-7, b
assert b.precisions == [1.0, 1.0, 1.0, None]
s = sg.bertscore_greedy([[1, 0], [0, 1]], [[1, 0], [0.7071067811865476, 0.7071067811865476]])
assert abs(s.precision - 0.853553) < 1e-6 and abs(s.recall - 0.853553) < 1e-6
t = sg.welch_ttest([1, 2, 3, 4], [2, 3, 4, 5])
assert abs(t.t_statistic + 1.095445) < 1e-6 and abs(t.degrees_of_freedom - 6) < 1e-12
assert sg.detect_circularity('a table is a sort of a table', 'table')
assert sg.share(5, 32)['display'] == '15.6'
assert sg.share(0, 0) is None
");
}

#[test]
fn aggregation_and_prompts() {
    run(c"
ranked = sg.rank_candidates([('x', [1, 0], 1), ('xy', [0.9, 0.1], 1), ('y', [0, 1], 1)])
assert [t for t, _ in ranked] == ['xy', 'x', 'y']
labels = sg.assign_sense_labels([
    ('w', 'w_1', 3, [('shared', [1, 0], 3)]),
    ('w', 'w_2', 2, [('shared', [1, 0], 2), ('other', [0, 1], 1)]),
])
assert [(l.label, l.rank_used) for l in labels] == [('shared', 0), ('other', 1)]
assert sg.mean_embedding([[1, 0], [0, 1]]) == [0.5, 0.5]
assert sg.default_prompt('fi') == '. Mitä tarkoittaa <target>?'
assert sg.build_prompt('Kuu paistoi.', 'kuu', 'fi') == 'Kuu paistoi. . Mitä tarkoittaa kuu?'
assert sg.PromptTemplate.default_for('ru').build('x', 'y') == 'x Что такое y?'
assert sg.trainer_config()['lora_rank'] == 256
");
}

#[test]
fn scoring_report_and_errors() {
    run(c"
r = sg.score_predictions([('hiiri', 'hiiri_2', 'tietokoneen osoitinlaite')],
                         [('hiiri', 'hiiri_2', 'tietokoneen osoitinlaite'), ('kuu', 'kuu_2', 'kuukausi')])
assert r['coverage'] == 0.5
assert abs(r['aggregates']['bleu'] - 50.0) < 1e-9
for bad in (lambda: sg.sentence_bleu(['a'], []), lambda: sg.default_prompt('xx'), lambda: sg.share(3, 2)):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError('expected ValueError')
");
}
