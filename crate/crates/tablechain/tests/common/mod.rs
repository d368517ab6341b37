//! Shared fixtures: the ten-cyclist walkthrough and a scripted-chain
//! recorder that builds backend scripts by walking the intended chain with
//! the same prompt builders the controller uses.

#![allow(dead_code)]

use tablechain::backend::ScriptedBackend;
use tablechain::chain::PlanConfig;
use tablechain::demo::DemoSet;
use tablechain::ops::{apply, Operation};
use tablechain::parse::{parse_args, parse_plan, vote_args};
use tablechain::prompt::{
    build_args_prompt, build_dynamicplan_prompt, build_query_prompt, ChainLink, QueryTable,
};
use tablechain::table::Table;

pub fn cyclist_table() -> Table {
    Table::new(
        None,
        ["Rank", "Cyclist", "Team", "Time", "UCI ProTour; Points"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        vec![
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
        ],
    )
    .unwrap()
}

pub const CYCLIST_QUESTION: &str = "which country had the most cyclists finish within the top 10?";

/// The grouped table the cyclist walkthrough must reach, byte for byte.
pub const CYCLIST_GROUPED_PIPE: &str = "col : Group ID | Country | Count\n\
row 1 : 1 | ITA | 3\n\
row 2 : 2 | ESP | 3\n\
row 3 : 3 | RUS | 2\n\
row 4 : 4 | FRA | 2";

/// Authored completions for one chain: planning completions in order, the
/// sampled argument completions per executed operation, and the final query
/// completion.
pub struct ChainScriptSpec {
    pub plans: Vec<String>,
    pub args: Vec<Vec<String>>,
    pub query: String,
}

/// Walks the intended chain with the library's own prompt builders,
/// recording each completion at its prompt. Returns the expected final
/// table. Panics if the spec is not internally consistent (a fixture bug).
pub fn record_chain_script(
    backend: &mut ScriptedBackend,
    table: &Table,
    question: &str,
    cfg: &PlanConfig,
    demos: &DemoSet,
    spec: &ChainScriptSpec,
) -> Table {
    let mut current = table.clone();
    let mut history = vec![ChainLink::begin()];
    let mut group_note: Option<(Table, String)> = None;
    let mut args_iter = spec.args.iter();

    for plan_completion in &spec.plans {
        let prompt =
            build_dynamicplan_prompt(&current, question, &history, &cfg.pool, demos, cfg.task)
                .expect("fixture: plan prompt must build");
        backend.record(prompt.text(), vec![plan_completion.clone()]);
        let step = parse_plan(plan_completion).expect("fixture: plan completion must parse");
        if step.op == Operation::End {
            history.push(ChainLink::end());
            break;
        }
        let completions = args_iter
            .next()
            .expect("fixture: missing args completions for a planned op");
        let params = cfg.sampling.params_for(step.op);
        assert_eq!(
            completions.len(),
            params.n_samples as usize,
            "fixture: args completions must match n_samples for {}",
            step.op
        );
        let args_prompt = build_args_prompt(&current, question, step.op, demos, cfg.task)
            .expect("fixture: args prompt must build");
        backend.record(args_prompt.text(), completions.clone());
        let parsed: Vec<_> = completions
            .iter()
            .filter_map(|c| parse_args(step.op, c).ok())
            .collect();
        let winner = vote_args(&parsed).clone();
        let next = apply(&current, step.op, &winner.args).expect("fixture: op must execute");
        group_note = if step.op == Operation::GroupBy {
            Some((current.clone(), next.header()[1].clone()))
        } else {
            None
        };
        history.push(ChainLink {
            op: step.op,
            args: Some(winner.args),
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
    let query_prompt = build_query_prompt(&view, question, demos, cfg.task)
        .expect("fixture: query prompt must build");
    backend.record(query_prompt.text(), vec![spec.query.clone()]);
    current
}

/// The recorded walkthrough over the cyclist table: add a country column,
/// keep all rows, project to the country column, group it, end, answer.
pub fn cyclist_script_spec() -> ChainScriptSpec {
    let select_all = "The answer is : f_select_row([*])".to_string();
    ChainScriptSpec {
        plans: vec![
            "f_add_column(Country) -> f_select_row(*) -> f_select_column(Country) -> f_group_by(Country) -> <END>".into(),
            "f_select_row(*) -> f_select_column(Country) -> f_group_by(Country) -> <END>".into(),
            "f_select_column(Country) -> f_group_by(Country) -> <END>".into(),
            "f_group_by(Country) -> <END>".into(),
            "<END>".into(),
        ],
        args: vec![
            vec![
                "Explanation: we extract the country code from column \"Cyclist\" and create a \
                 different column \"Country\" for each row. The datatype is String.\n\
                 Therefore, the answer is: f_add_column(Country). The value: \
                 ESP | RUS | ITA | ITA | ITA | RUS | ESP | FRA | ESP | FRA"
                    .into(),
            ],
            vec![
                select_all.clone(),
                select_all.clone(),
                select_all.clone(),
                "The answer is : f_select_row([row 1, row 2])".into(),
                select_all.clone(),
                select_all.clone(),
                select_all.clone(),
                select_all,
            ],
            vec!["The answer is : f_select_column([Country])".to_string(); 8],
            vec!["Therefore, the answer is: f_group_by(Country).".into()],
        ],
        query: "Italy.".into(),
    }
}

/// Records the cyclist walkthrough and returns the backend plus the expected
/// final (grouped) table.
pub fn cyclist_backend(cfg: &PlanConfig, demos: &DemoSet) -> (ScriptedBackend, Table) {
    let mut backend = ScriptedBackend::new();
    let final_table = record_chain_script(
        &mut backend,
        &cyclist_table(),
        CYCLIST_QUESTION,
        cfg,
        demos,
        &cyclist_script_spec(),
    );
    (backend, final_table)
}
