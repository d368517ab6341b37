//! Writes the offline cyclist quickstart fixture: a one-sample dataset and a
//! completion script that drives the full pipeline without any provider.
//!
//! Usage: cargo run -p tablechain --example record_cyclist -- <out-dir>

use std::io::Write;
use std::path::PathBuf;

use tablechain::backend::{prompt_key, ScriptRecord, ScriptRequest};
use tablechain::chain::PlanConfig;
use tablechain::demo::DemoSet;
use tablechain::ops::{apply, Operation};
use tablechain::parse::{parse_args, parse_plan};
use tablechain::profile::DatasetKind;
use tablechain::prompt::{
    build_args_prompt, build_dynamicplan_prompt, build_query_prompt, ChainLink, QueryTable,
};
use tablechain::table::Table;

const QUESTION: &str = "which country had the most cyclists finish within the top 10?";

fn cyclist_table() -> Table {
    let rows = vec![
        vec![
            "1",
            "Alejandro Valverde (ESP)",
            "Caisse d'Epargne",
            "5h 29' 10\"",
            "40",
        ],
        vec![
            "2",
            "Alexandr Kolobnev (RUS)",
            "Team CSC Saxo Bank",
            "s.t.",
            "30",
        ],
        vec!["3", "Davide Rebellin (ITA)", "Gerolsteiner", "s.t.", "25"],
        vec!["4", "Paolo Bettini (ITA)", "Quick Step", "s.t.", "20"],
        vec!["5", "Franco Pellizotti (ITA)", "Liquigas", "s.t.", "15"],
        vec!["6", "Denis Menchov (RUS)", "Rabobank", "s.t.", "11"],
        vec![
            "7",
            "Samuel Sánchez (ESP)",
            "Euskaltel-Euskadi",
            "s.t.",
            "7",
        ],
        vec![
            "8",
            "Stéphane Goubert (FRA)",
            "Ag2r-La Mondiale",
            "+ 2\"",
            "5",
        ],
        vec![
            "9",
            "Haimar Zubeldia (ESP)",
            "Euskaltel-Euskadi",
            "+ 2\"",
            "3",
        ],
        vec!["10", "David Moncoutié (FRA)", "Cofidis", "+ 2\"", "1"],
    ];
    Table::new(
        None,
        ["Rank", "Cyclist", "Team", "Time", "UCI ProTour; Points"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    )
    .unwrap()
}

fn main() {
    let out_dir: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures".to_string())
        .into();
    std::fs::create_dir_all(&out_dir).expect("create output dir");

    let cfg = PlanConfig::for_dataset(DatasetKind::WikiTq);
    let demos = DemoSet::builtin(DatasetKind::WikiTq);
    let table = cyclist_table();

    let plans = [
        "f_add_column(Country) -> f_select_row(*) -> f_select_column(Country) -> f_group_by(Country) -> <END>",
        "f_select_row(*) -> f_select_column(Country) -> f_group_by(Country) -> <END>",
        "f_select_column(Country) -> f_group_by(Country) -> <END>",
        "f_group_by(Country) -> <END>",
        "<END>",
    ];
    let select_all = "The answer is : f_select_row([*])".to_string();
    let args: Vec<Vec<String>> = vec![
        vec![
            "Explanation: we extract the country code from column \"Cyclist\" and create a \
             different column \"Country\" for each row. The datatype is String.\n\
             Therefore, the answer is: f_add_column(Country). The value: \
             ESP | RUS | ITA | ITA | ITA | RUS | ESP | FRA | ESP | FRA"
                .to_string(),
        ],
        vec![select_all; 8],
        vec!["The answer is : f_select_column([Country])".to_string(); 8],
        vec!["Therefore, the answer is: f_group_by(Country).".to_string()],
    ];

    let mut records: Vec<ScriptRecord> = Vec::new();
    let mut record = |prompt: &str, completions: &[String], n_samples: u32| {
        records.push(ScriptRecord {
            key: prompt_key(prompt),
            request: ScriptRequest {
                prompt: prompt.to_string(),
                temperature: 0.0,
                top_p: 1.0,
                decode_steps: 200,
                n_samples,
            },
            completions: completions.to_vec(),
            timestamp: 0,
        });
    };

    // walk the chain with the same builders the controller uses
    let mut current = table.clone();
    let mut history = vec![ChainLink::begin()];
    let mut group_note: Option<(Table, String)> = None;
    let mut args_iter = args.into_iter();
    for plan_completion in plans {
        let prompt =
            build_dynamicplan_prompt(&current, QUESTION, &history, &cfg.pool, &demos, cfg.task)
                .unwrap();
        record(prompt.text(), &[plan_completion.to_string()], 1);
        let step = parse_plan(plan_completion).unwrap();
        if step.op == Operation::End {
            break;
        }
        let completions = args_iter.next().unwrap();
        let args_prompt = build_args_prompt(&current, QUESTION, step.op, &demos, cfg.task).unwrap();
        record(args_prompt.text(), &completions, completions.len() as u32);
        let parsed = parse_args(step.op, &completions[0]).unwrap();
        let next = apply(&current, step.op, &parsed.args).unwrap();
        group_note = if step.op == Operation::GroupBy {
            Some((current.clone(), next.header()[1].clone()))
        } else {
            None
        };
        history.push(ChainLink {
            op: step.op,
            args: Some(parsed.args),
        });
        current = next;
    }
    let view = match &group_note {
        Some((source, column)) => QueryTable::Grouped {
            source,
            column,
            grouped: &current,
        },
        None => QueryTable::Plain(&current),
    };
    let query_prompt = build_query_prompt(&view, QUESTION, &demos, cfg.task).unwrap();
    record(query_prompt.text(), &["Italy.".to_string()], 1);

    let script_path = out_dir.join("cyclist.script.jsonl");
    let mut file = std::fs::File::create(&script_path).unwrap();
    for script_record in &records {
        writeln!(file, "{}", serde_json::to_string(script_record).unwrap()).unwrap();
    }

    let dataset_path = out_dir.join("cyclist.jsonl");
    let sample = serde_json::json!({
        "id": "cyclist",
        "table": &table,
        "question": QUESTION,
        "answers": ["Italy"],
    });
    std::fs::write(&dataset_path, format!("{sample}\n")).unwrap();

    println!("wrote {}", script_path.display());
    println!("wrote {}", dataset_path.display());
}
