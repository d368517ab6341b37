//! Property tests for the operation engine and the argument parser.

use proptest::prelude::*;
use tablechain::metrics::denotation_match;
use tablechain::ops::{
    apply, f_add_column, f_group_by, f_select_column, f_select_row, f_sort_by, Arguments,
    Operation, RowSelection, SortOrder,
};
use tablechain::parse::{canonical_format, parse_args};
use tablechain::table::{estimate_tokens, CellValue, ColumnRef, Table};

fn arb_cell() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[a-c]{1,3}",
        1 => "[0-9]{1,4}",
        1 => Just(String::new()),
    ]
}

prop_compose! {
    fn arb_table(max_rows: usize, max_cols: usize)
        (cols in 1..=max_cols, rows in 0..=max_rows)
        (header in proptest::collection::vec("[A-Z][a-z]{0,4}", cols..=cols),
         grid in proptest::collection::vec(
             proptest::collection::vec(arb_cell(), cols..=cols), rows..=rows))
        -> Table {
        Table::new(None, header, grid).unwrap()
    }
}

proptest! {
    /// Every operation preserves rectangularity and the caption.
    #[test]
    fn operations_preserve_rectangularity(table in arb_table(6, 4), seed in 0usize..100) {
        let col = ColumnRef::Index(seed % table.n_cols());
        let outputs = vec![
            f_add_column(&table, "extra", &vec![String::from("v"); table.n_rows()]).unwrap(),
            f_select_row(&table, &RowSelection::All).unwrap(),
            f_select_column(&table, std::slice::from_ref(&col)).unwrap(),
            f_group_by(&table, &col).unwrap(),
            f_sort_by(&table, &col, SortOrder::SmallToLarge).unwrap(),
        ];
        for out in outputs {
            for row in out.rows() {
                prop_assert_eq!(row.len(), out.n_cols());
            }
        }
    }

    /// add_column grows the header by one and never changes the row count.
    #[test]
    fn add_column_shape(table in arb_table(6, 4)) {
        let values: Vec<String> = (0..table.n_rows()).map(|i| format!("v{i}")).collect();
        let out = f_add_column(&table, "New", &values).unwrap();
        prop_assert_eq!(out.n_cols(), table.n_cols() + 1);
        prop_assert_eq!(out.n_rows(), table.n_rows());
        // original cells untouched
        for (row, orig) in out.rows().iter().zip(table.rows()) {
            prop_assert_eq!(&row[..orig.len()], &orig[..]);
        }
    }

    /// Selected rows are exactly the addressed input rows, in argument order.
    #[test]
    fn select_row_positional(table in arb_table(8, 3), indices in proptest::collection::vec(1usize..=8, 1..6)) {
        let valid: Vec<usize> = indices.into_iter().filter(|i| *i <= table.n_rows()).collect();
        prop_assume!(!valid.is_empty());
        let out = f_select_row(&table, &RowSelection::Rows(valid.clone())).unwrap();
        let mut seen = Vec::new();
        for &idx in &valid {
            if !seen.contains(&idx) {
                seen.push(idx);
            }
        }
        prop_assert_eq!(out.n_rows(), seen.len());
        for (row, &src) in out.rows().iter().zip(&seen) {
            prop_assert_eq!(row, &table.rows()[src - 1]);
        }
    }

    /// Column projection preserves cells cellwise.
    #[test]
    fn select_column_cellwise(table in arb_table(6, 4), picks in proptest::collection::vec(0usize..4, 1..4)) {
        let picks: Vec<usize> = picks.into_iter().filter(|c| *c < table.n_cols()).collect();
        prop_assume!(!picks.is_empty());
        let refs: Vec<ColumnRef> = picks.iter().map(|&c| ColumnRef::Index(c)).collect();
        let out = f_select_column(&table, &refs).unwrap();
        let mut expected = Vec::new();
        for &c in &picks {
            if !expected.contains(&c) {
                expected.push(c);
            }
        }
        prop_assert_eq!(out.n_cols(), expected.len());
        for (r, row) in out.rows().iter().enumerate() {
            for (j, &c) in expected.iter().enumerate() {
                prop_assert_eq!(&row[j], &table.rows()[r][c]);
            }
        }
    }

    /// Group counts sum to the row count and match brute-force frequencies,
    /// up to eight-by-eight tables over a three-symbol alphabet.
    #[test]
    fn group_by_frequencies(table in arb_table(8, 8)) {
        let col = ColumnRef::Index(0);
        let out = f_group_by(&table, &col).unwrap();
        let mut freq = std::collections::HashMap::new();
        for row in table.rows() {
            *freq.entry(row[0].raw()).or_insert(0usize) += 1;
        }
        let total: usize = out.rows().iter().map(|r| r[2].raw().parse::<usize>().unwrap()).sum();
        prop_assert_eq!(total, table.n_rows());
        prop_assert_eq!(out.n_rows(), freq.len());
        for row in out.rows() {
            prop_assert_eq!(freq[row[1].raw()], row[2].raw().parse::<usize>().unwrap());
        }
    }

    /// Sorting permutes the rows and is stable for equal keys.
    #[test]
    fn sort_by_permutation_and_stability(table in arb_table(8, 2), large in proptest::bool::ANY) {
        // tag rows with their original position in a second column
        let tagged = {
            let header = vec!["K".to_string(), "Tag".to_string()];
            let rows: Vec<Vec<CellValue>> = table
                .rows()
                .iter()
                .enumerate()
                .map(|(i, row)| vec![row[0].clone(), CellValue::new(i.to_string())])
                .collect();
            Table::from_cells(None, header, rows).unwrap()
        };
        let order = if large { SortOrder::LargeToSmall } else { SortOrder::SmallToLarge };
        let out = f_sort_by(&tagged, &ColumnRef::Index(0), order).unwrap();
        prop_assert_eq!(out.n_rows(), tagged.n_rows());
        // permutation: every tag appears exactly once
        let mut tags: Vec<usize> = out.rows().iter().map(|r| r[1].raw().parse().unwrap()).collect();
        tags.sort_unstable();
        prop_assert_eq!(tags, (0..tagged.n_rows()).collect::<Vec<_>>());
        // stability: equal keys keep their original relative order
        for pair in out.rows().windows(2) {
            if pair[0][0] == pair[1][0] {
                let a: usize = pair[0][1].raw().parse().unwrap();
                let b: usize = pair[1][1].raw().parse().unwrap();
                prop_assert!(a < b, "equal keys reordered: {a} after {b}");
            }
        }
    }

    /// Dispatch equals the direct call.
    #[test]
    fn apply_matches_direct_dispatch(table in arb_table(5, 3)) {
        let col = ColumnRef::Index(0);
        let via_apply = apply(&table, Operation::GroupBy, &Arguments::GroupBy { column: col.clone() }).unwrap();
        let direct = f_group_by(&table, &col).unwrap();
        prop_assert_eq!(via_apply, direct);
    }

    /// Duplicating any row strictly increases the size estimate.
    #[test]
    fn estimate_strictly_increases_with_rows(table in arb_table(5, 3), pick in 0usize..5) {
        prop_assume!(table.n_rows() > 0);
        let pick = pick % table.n_rows();
        let mut rows = table.rows().to_vec();
        rows.push(rows[pick].clone());
        let bigger = Table::from_cells(None, table.header().to_vec(), rows).unwrap();
        prop_assert!(estimate_tokens(&bigger) > estimate_tokens(&table));
    }

    /// Canonical serialization of parsed arguments re-parses to equal
    /// arguments for every operation kind.
    #[test]
    fn parse_args_round_trip(
        name in "[A-Za-z][A-Za-z0-9 ]{0,10}",
        rows in proptest::collection::vec(1usize..100, 1..6),
        values in proptest::collection::vec("[a-z0-9]{1,6}", 1..6),
        large in proptest::bool::ANY,
    ) {
        let name = name.trim().to_string();
        prop_assume!(!name.is_empty());
        let mut distinct = Vec::new();
        for r in rows {
            if !distinct.contains(&r) {
                distinct.push(r);
            }
        }
        let cases = vec![
            (Operation::AddColumn, Arguments::AddColumn { name: name.clone(), values: values.clone() }),
            (Operation::SelectRow, Arguments::SelectRow(RowSelection::Rows(distinct))),
            (Operation::SelectRow, Arguments::SelectRow(RowSelection::All)),
            (Operation::SelectColumn, Arguments::SelectColumn { columns: vec![ColumnRef::Name(name.clone())] }),
            (Operation::GroupBy, Arguments::GroupBy { column: ColumnRef::Name(name.clone()) }),
            (Operation::SortBy, Arguments::SortBy {
                column: ColumnRef::Name(name),
                order: if large { SortOrder::LargeToSmall } else { SortOrder::SmallToLarge },
            }),
        ];
        for (op, args) in cases {
            let text = canonical_format(op, &args);
            let parsed = parse_args(op, &text).unwrap();
            prop_assert_eq!(parsed.args, args);
        }
    }

    /// No parser entry point panics on arbitrary input, including completions
    /// that mix markers, formulas, and width-changing case folds.
    #[test]
    fn parsers_never_panic(
        raw in "\\PC{0,120}",
        snippets in proptest::collection::vec(
            prop_oneof![
                Just("the answer is".to_string()),
                Just("The answer is : f_select_row([row 1])".to_string()),
                Just("f_add_column(X). The value: a | b".to_string()),
                Just("İİ the ANSWER IS: f_group_by(\u{130})".to_string()),
                Just("f_sort_by(Y), the order is \"large to small\".".to_string()),
                Just("<END>".to_string()),
                Just("\n".to_string()),
                "\\PC{0,20}",
            ],
            0..5,
        ),
    ) {
        let mut text = raw;
        for snippet in snippets {
            text.push_str(&snippet);
        }
        let _ = tablechain::encode::decode_pipe(&text);
        let _ = tablechain::parse::parse_plan(&text);
        for op in Operation::ATOMIC {
            if let Ok(parsed) = parse_args(op, &text) {
                // anything accepted must survive the canonical round trip
                let canonical = canonical_format(op, &parsed.args);
                let reparsed = parse_args(op, &canonical).unwrap();
                prop_assert_eq!(reparsed.args, parsed.args);
            }
        }
        for task in [
            tablechain::profile::TaskKind::ShortQa,
            tablechain::profile::TaskKind::FactVerification,
            tablechain::profile::TaskKind::FreeFormQa,
        ] {
            let _ = tablechain::parse::parse_final_answer(&text, task);
            let _ = tablechain::parse::parse_cot_answer(&text, task);
            let _ = tablechain::eval::parse_dataset_line(&text, task);
        }
    }

    /// Denotation matching is reflexive under its own normalization, and
    /// case or trailing-period perturbations of a gold always match.
    #[test]
    fn denotation_perturbations_match(gold in "[a-zA-Z0-9][a-zA-Z0-9 ,]{0,12}") {
        let gold = gold.trim().to_string();
        prop_assume!(!gold.is_empty());
        let golds = vec![gold.clone()];
        let perturbations = [
            gold.clone(),
            gold.to_uppercase(),
            gold.to_lowercase(),
            format!("{gold}."),
            format!("  {gold} "),
            format!("\"{gold}\""),
        ];
        for perturbed in perturbations {
            prop_assert!(denotation_match(&perturbed, &golds), "failed for {:?}", perturbed);
        }
    }
}
