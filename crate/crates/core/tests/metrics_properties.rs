use proptest::prelude::*;
use repolens_core::metrics::{
    cyclomatic_complexity, halstead_metrics, maintainability_index, strip_comments_and_strings, count_sloc,
    Analyzer, ProfileSet,
};
use repolens_core::Language;
use std::sync::LazyLock;

static PROFILES: LazyLock<ProfileSet> = LazyLock::new(ProfileSet::builtin);
static ANALYZER: LazyLock<Analyzer> = LazyLock::new(Analyzer::default);

fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "total", "idx", "x1", "iffy", "format", "n"]).prop_map(String::from)
}

/// One self-contained C-family line: no construct spans a line break.
fn c_line() -> impl Strategy<Value = String> {
    prop_oneof![
        (ident(), ident(), 0u32..100).prop_map(|(a, b, n)| format!("{a} = {b} + {n};")),
        (ident(), ident()).prop_map(|(a, b)| format!("if ({a} && {b}) {{")),
        (ident(), 0u32..9).prop_map(|(a, n)| format!("for ({a} = 0; {a} < {n}; {a}++) {{")),
        ident().prop_map(|a| format!("while ({a} || !{a}) {{")),
        Just("}".to_string()),
        Just(String::new()),
        ident().prop_map(|a| format!("// if {a} while")),
        ident().prop_map(|a| format!("s = \"if {a} && for\";")),
        ident().prop_map(|a| format!("x = {a} ? 1 : 2; /* case */")),
    ]
}

fn program() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(c_line(), 0..30)
}

fn languages() -> impl Strategy<Value = Language> {
    prop::sample::select(vec![Language::C, Language::Cpp, Language::Java, Language::JavaScript, Language::Go])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn complexity_at_least_one(lines in program(), lang in languages()) {
        let set = &*PROFILES;
        let profile = set.get(lang).unwrap();
        prop_assert!(cyclomatic_complexity(&lines.join("\n"), profile) >= 1);
    }

    #[test]
    fn comment_lines_change_nothing(lines in program(), at in 0usize..30, lang in languages()) {
        let set = &*PROFILES;
        let profile = set.get(lang).unwrap();
        let before = lines.join("\n");
        let mut with_comment = lines.clone();
        with_comment.insert(at.min(lines.len()), "// if (a && b) while for".to_string());
        let after = with_comment.join("\n");
        prop_assert_eq!(count_sloc(&before, profile), count_sloc(&after, profile));
        prop_assert_eq!(cyclomatic_complexity(&before, profile), cyclomatic_complexity(&after, profile));
        prop_assert_eq!(halstead_metrics(&before, profile).0, halstead_metrics(&after, profile).0);
    }

    #[test]
    fn appending_a_decision_is_monotone(lines in program(), kw in prop::sample::select(vec!["if", "for", "while"])) {
        let set = &*PROFILES;
        let profile = set.get(Language::C).unwrap();
        let before = lines.join("\n");
        let after = format!("{before}\n{kw} (a) {{}}");
        prop_assert!(cyclomatic_complexity(&after, profile) >= cyclomatic_complexity(&before, profile));
    }

    #[test]
    fn stripping_preserves_newlines(text in "[a-z\"'/*#` \n\\\\]{0,80}", lang in languages()) {
        let set = &*PROFILES;
        let profile = set.get(lang).unwrap();
        let stripped = strip_comments_and_strings(&text, profile);
        prop_assert_eq!(stripped.matches('\n').count(), text.matches('\n').count());
        prop_assert_eq!(stripped.chars().count(), text.chars().count());
        let positions = |s: &str| s.char_indices().filter(|(_, c)| *c == '\n').map(|(i, _)| i).collect::<Vec<_>>();
        prop_assert_eq!(positions(&stripped), positions(&text));
    }

    #[test]
    fn analysis_is_deterministic(lines in program()) {
        let analyzer = &*ANALYZER;
        let text = lines.join("\n");
        prop_assert_eq!(analyzer.analyze("f.c", Language::C, &text), analyzer.analyze("f.c", Language::C, &text));
    }

    #[test]
    fn mi_matches_independent_polynomial(volume in 0.0f64..1e7, cc in 1usize..500, sloc in 0usize..100_000) {
        let mi = maintainability_index(volume, cc, sloc);
        let v = if volume < 1.0 { 1.0 } else { volume };
        let loc = if sloc == 0 { 1.0 } else { sloc as f64 };
        let expected = 171.0 - 5.2 * v.ln() - 0.23 * (cc as f64) - 16.2 * loc.ln();
        let scale = expected.abs().max(f64::MIN_POSITIVE);
        prop_assert!(((mi - expected) / scale).abs() <= 1e-9, "{} vs {}", mi, expected);
    }
}
