//! Standard Task Graph (STG) files.
//!
//! Layout: the first number is the count `n` of real tasks; then `n + 2` records of
//! `index time npred pred...`, where 0 and `n + 1` are the dummy source and sink.
//! Lines starting with `#` are comments.

use super::IngestError;
use crate::model::{FeatureSet, Task, Workflow};

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .flat_map(|(i, l)| l.split_whitespace().map(move |tok| (i + 1, tok)))
            .collect();
        Tokens { items, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |(l, _)| *l)
    }

    fn next_number<T: std::str::FromStr>(&mut self, what: &str) -> Result<(usize, T), IngestError> {
        let Some(&(line, tok)) = self.items.get(self.pos) else {
            return Err(IngestError::Stg {
                line: self.last_line(),
                message: format!("unexpected end of file, expected {what}"),
            });
        };
        self.pos += 1;
        tok.parse().map(|v| (line, v)).map_err(|_| IngestError::Stg {
            line,
            message: format!("expected {what}, found {tok:?}"),
        })
    }
}

/// Builds a workflow whose tasks are `T<index>` (zero-padded). Zero processing times,
/// normally only on the dummy source and sink, become one time unit.
pub fn parse_stg(
    text: &str,
    workflow_id: &str,
    default_cores: u32,
    default_features: &FeatureSet,
) -> Result<Workflow, IngestError> {
    let mut tokens = Tokens::new(text);
    let (_, n): (_, usize) = tokens.next_number("task count")?;
    let total = n + 2;
    let width = (total - 1).to_string().len();
    let name = |i: usize| format!("T{i:0width$}");
    let mut tasks = Vec::with_capacity(total);
    for expected in 0..total {
        let (line, index): (_, usize) = tokens.next_number("task index")?;
        if index != expected {
            return Err(IngestError::Stg {
                line,
                message: format!("expected task index {expected}, found {index}"),
            });
        }
        let (line, time): (_, f64) = tokens.next_number("processing time")?;
        if !(time >= 0.0) {
            return Err(IngestError::Stg {
                line,
                message: "processing time must be non-negative".into(),
            });
        }
        let (_, npred): (_, usize) = tokens.next_number("predecessor count")?;
        let mut deps = Vec::with_capacity(npred);
        for _ in 0..npred {
            let (line, p): (_, usize) = tokens.next_number("predecessor index")?;
            if p >= index {
                return Err(IngestError::Stg {
                    line,
                    message: format!("task {index} lists predecessor {p} (forward reference)"),
                });
            }
            deps.push(name(p));
        }
        let duration = if time == 0.0 { 1.0 } else { time };
        let mut task = Task::new(name(index), duration).with_cores(default_cores);
        task.features = default_features.clone();
        task.dependencies = deps;
        tasks.push(task);
    }
    if let Some(&(line, tok)) = tokens.items.get(tokens.pos) {
        return Err(IngestError::Stg {
            line,
            message: format!("unexpected trailing token {tok:?}"),
        });
    }
    Workflow::new(workflow_id, tasks).map_err(IngestError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{topological_order, Durations};

    const TWO: &str = "2\n0 0 0\n1 3 1 0\n2 5 1 1\n3 0 1 2\n";

    #[test]
    fn two_task_chain() {
        let w = parse_stg(TWO, "w", 1, &FeatureSet::new()).unwrap();
        let durations: Vec<f64> = w
            .tasks()
            .map(|t| match t.durations {
                Durations::Uniform(d) => d,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(durations, [1.0, 3.0, 5.0, 1.0]);
        let deps: Vec<Vec<String>> = w.tasks().map(|t| t.dependencies.clone()).collect();
        assert_eq!(deps, [vec![], vec!["T0".to_string()], vec!["T1".into()], vec!["T2".into()]]);
        assert_eq!(topological_order(&w).unwrap(), ["T0", "T1", "T2", "T3"]);
        assert!(w.tasks().all(|t| t.cores == 1 && t.data == 0.0));
    }

    #[test]
    fn comments_and_wrapped_predecessors() {
        let text = "# header\n2\n0 0 0\n1 3 1\n 0\n2 5 2 0 1\n3 0 1 2\n# trailer\n";
        let w = parse_stg(text, "w", 2, &FeatureSet::from(["F1".to_string()])).unwrap();
        assert_eq!(w.task("T2").unwrap().dependencies, ["T0", "T1"]);
        assert!(w.tasks().all(|t| t.features.contains("F1")));
    }

    #[test]
    fn forward_reference_is_rejected() {
        let text = "2\n0 0 0\n1 3 1 2\n2 5 1 1\n3 0 1 2\n";
        match parse_stg(text, "w", 1, &FeatureSet::new()) {
            Err(IngestError::Stg { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("forward"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_and_garbage_input() {
        assert!(matches!(
            parse_stg("2\n0 0 0\n1 3", "w", 1, &FeatureSet::new()),
            Err(IngestError::Stg { .. })
        ));
        assert!(matches!(
            parse_stg("2\n0 x 0", "w", 1, &FeatureSet::new()),
            Err(IngestError::Stg { line: 2, .. })
        ));
        assert!(matches!(
            parse_stg(&format!("{TWO}9\n"), "w", 1, &FeatureSet::new()),
            Err(IngestError::Stg { line: 6, .. })
        ));
    }

    #[test]
    fn ids_are_zero_padded() {
        let mut text = String::from("10\n0 0 0\n");
        for i in 1..=10 {
            text.push_str(&format!("{i} 2 1 {}\n", i - 1));
        }
        text.push_str("11 0 1 10\n");
        let w = parse_stg(&text, "w", 1, &FeatureSet::new()).unwrap();
        assert_eq!(w.len(), 12);
        assert_eq!(w.task_at(0).id, "T00");
        assert_eq!(w.task_at(11).id, "T11");
    }
}
