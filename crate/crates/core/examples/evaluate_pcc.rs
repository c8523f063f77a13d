//! Correlate predictions with human labels.

use pronassess::dimension::Dimension;
use pronassess::eval::{evaluate_run, pearson, render_table, LabelRecord, LabelSet};
use pronassess::fusion::ScoreTable;

fn main() {
    println!("r = {}", pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap());
    if let Err(e) = pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]) {
        println!("constant labels: {e}");
    }

    let labels = LabelSet::from_records(
        [("a", 8.0, 7.0), ("b", 3.0, 5.0), ("c", 6.0, 6.0), ("d", 9.0, 9.0)]
            .into_iter()
            .map(|(id, acc, flu)| LabelRecord {
                utt_id: id.into(),
                accuracy: acc,
                fluency: flu,
                prosody: None,
            })
            .collect(),
        "0-10",
    )
    .unwrap();
    let acc = ScoreTable::from_entries(Dimension::Accuracy, [("a", 4.0), ("b", 2.0), ("c", 3.0), ("e", 5.0)].map(|(k, v)| (k.to_string(), v)));
    let flu = ScoreTable::from_entries(Dimension::Fluency, [("a", 4.0), ("b", 3.0), ("c", 3.0), ("e", 4.0)].map(|(k, v)| (k.to_string(), v)));
    let report = evaluate_run("demo", &[acc, flu], &labels, 0);
    print!("{}", render_table(&[report]));
}
