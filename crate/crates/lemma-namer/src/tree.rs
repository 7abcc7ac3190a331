//! Tree simplification and flattening for parse trees and kernel trees.
//!
//! Trimming collapses fully qualified name subtrees to their last component,
//! strips location wrappers, and extracts singleton lists. Flattening
//! linearizes a tree in pre-order with "(" / ")" marking child boundaries.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sexp::Sexp;
use crate::subtok::{subtokenize_flat_token, Lexicon};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrimVariant {
    Standard,
    /// Like Standard but keeps the head category of a referenced name:
    /// `(Ref (DirPath ...) (Id x))` becomes `(Ref x)` instead of `x`.
    KeepCategory,
    /// Removes every node strictly deeper than `max_depth`.
    DepthLimit { max_depth: usize },
    /// Deletes uniformly chosen leaves (never the root) until the node count
    /// drops to `target_node_count`. Deterministic per seed.
    Random { target_node_count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimConfig {
    pub variant: TrimVariant,
    /// Heads whose subtrees are deleted outright (location wrappers).
    pub location_heads: BTreeSet<String>,
    /// Heads whose `(Head (DirPath ...) (Id X))` subtrees collapse to `X`.
    pub qualified_name_heads: BTreeSet<String>,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            variant: TrimVariant::Standard,
            location_heads: ["loc"].iter().map(|s| s.to_string()).collect(),
            qualified_name_heads: ["Ref", "Ser_Qualid"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TrimConfig {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn with_variant(variant: TrimVariant) -> Self {
        TrimConfig { variant, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeStats {
    pub depth: usize,
    pub node_count: usize,
    /// Length of the flattened, sub-tokenized sequence.
    pub flat_subtoken_count: usize,
}

/// `(Head (DirPath ...) (Id X))` with Head in the configured set.
fn match_qualified_name(tree: &Sexp, config: &TrimConfig) -> Option<(String, String)> {
    let cs = tree.as_list()?;
    if cs.len() != 3 {
        return None;
    }
    let head = cs[0].as_atom()?;
    if !config.qualified_name_heads.contains(head) {
        return None;
    }
    if cs[1].head() != Some("DirPath") {
        return None;
    }
    match cs[2].as_list()? {
        [Sexp::Atom(id), Sexp::Atom(x)] if id == "Id" => Some((head.to_string(), x.clone())),
        _ => None,
    }
}

fn has_location_head(tree: &Sexp, config: &TrimConfig) -> bool {
    tree.head().is_some_and(|h| config.location_heads.contains(h))
}

/// One whole-tree rewrite pass. Returns the rewritten tree and whether
/// anything changed; callers iterate to fixpoint.
fn rewrite_once(tree: &Sexp, config: &TrimConfig, keep_category: bool) -> (Sexp, bool) {
    if let Some((head, x)) = match_qualified_name(tree, config) {
        let replacement = if keep_category {
            Sexp::list(vec![Sexp::Atom(head), Sexp::Atom(x)])
        } else {
            Sexp::Atom(x)
        };
        return (replacement, true);
    }
    match tree {
        Sexp::Atom(_) => (tree.clone(), false),
        Sexp::List(cs) => {
            let mut changed = false;
            let mut out = Vec::with_capacity(cs.len());
            for c in cs {
                if has_location_head(c, config) {
                    changed = true;
                    continue;
                }
                let (rw, ch) = rewrite_once(c, config, keep_category);
                changed |= ch;
                out.push(rw);
            }
            if out.len() == 1 {
                return (out.into_iter().next().unwrap(), true);
            }
            (Sexp::List(out), changed)
        }
    }
}

fn trim_fixpoint(tree: &Sexp, config: &TrimConfig, keep_category: bool) -> Sexp {
    let mut current = tree.clone();
    loop {
        let (next, changed) = rewrite_once(&current, config, keep_category);
        if !changed {
            return next;
        }
        current = next;
    }
}

fn depth_limit(tree: &Sexp, max_depth: usize) -> Sexp {
    fn go(tree: &Sexp, level: usize, max_depth: usize) -> Sexp {
        match tree {
            Sexp::Atom(_) => tree.clone(),
            Sexp::List(cs) => {
                if level + 1 > max_depth {
                    Sexp::List(vec![])
                } else {
                    Sexp::List(cs.iter().map(|c| go(c, level + 1, max_depth)).collect())
                }
            }
        }
    }
    go(tree, 1, max_depth)
}

/// Path from the root to a leaf, as child indices.
type Path = Vec<usize>;

fn collect_leaf_paths(tree: &Sexp, prefix: &mut Path, out: &mut Vec<Path>) {
    match tree {
        Sexp::Atom(_) => out.push(prefix.clone()),
        Sexp::List(cs) => {
            if cs.is_empty() {
                out.push(prefix.clone());
            } else {
                for (i, c) in cs.iter().enumerate() {
                    prefix.push(i);
                    collect_leaf_paths(c, prefix, out);
                    prefix.pop();
                }
            }
        }
    }
}

fn remove_at(tree: &mut Sexp, path: &[usize]) {
    match path {
        [] => unreachable!("root is never removed"),
        [i] => {
            if let Sexp::List(cs) = tree {
                cs.remove(*i);
            }
        }
        [i, rest @ ..] => {
            if let Sexp::List(cs) = tree {
                remove_at(&mut cs[*i], rest);
            }
        }
    }
}

fn random_trim(tree: &Sexp, target: usize, seed: u64) -> Sexp {
    let mut current = tree.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while current.node_count() > target {
        let mut leaves = Vec::new();
        collect_leaf_paths(&current, &mut Vec::new(), &mut leaves);
        // Only the root remains as a leaf: nothing left to delete.
        let candidates: Vec<&Path> = leaves.iter().filter(|p| !p.is_empty()).collect();
        let Some(path) = candidates.choose(&mut rng) else {
            break;
        };
        remove_at(&mut current, path);
    }
    current
}

/// Simplify a tree per the configured variant. Total: atoms pass through.
pub fn trim(tree: &Sexp, config: &TrimConfig) -> Sexp {
    match &config.variant {
        TrimVariant::Standard => trim_fixpoint(tree, config, false),
        TrimVariant::KeepCategory => trim_fixpoint(tree, config, true),
        TrimVariant::DepthLimit { max_depth } => depth_limit(tree, (*max_depth).max(1)),
        TrimVariant::Random { target_node_count, seed } => {
            random_trim(tree, (*target_node_count).max(1), *seed)
        }
    }
}

/// Pre-order linearization with "(" and ")" as child boundaries.
pub fn flatten(tree: &Sexp) -> Vec<String> {
    let mut out = Vec::with_capacity(tree.node_count());
    flatten_into(tree, &mut out);
    out
}

fn flatten_into(tree: &Sexp, out: &mut Vec<String>) {
    match tree {
        Sexp::Atom(a) => out.push(a.clone()),
        Sexp::List(cs) => {
            out.push("(".to_string());
            for c in cs {
                flatten_into(c, out);
            }
            out.push(")".to_string());
        }
    }
}

/// Flatten and sub-tokenize: identifier-shaped atoms are split with the
/// lexicon, boundaries and operator atoms pass through verbatim.
pub fn flatten_subtokenized(tree: &Sexp, lexicon: &Lexicon) -> Vec<String> {
    let mut out = Vec::new();
    for item in flatten(tree) {
        subtokenize_flat_token(&item, lexicon, &mut out);
    }
    out
}

pub fn stats(tree: &Sexp, lexicon: &Lexicon) -> TreeStats {
    TreeStats {
        depth: tree.depth(),
        node_count: tree.node_count(),
        flat_subtoken_count: flatten_subtokenized(tree, lexicon).len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexp::{parse_sexp, print_sexp};
    use proptest::prelude::*;

    fn std_cfg() -> TrimConfig {
        TrimConfig::standard()
    }

    #[test]
    fn atom_is_untouched() {
        assert_eq!(trim(&Sexp::atom("x"), &std_cfg()), Sexp::atom("x"));
    }

    #[test]
    fn double_singleton_extracts_to_atom() {
        // Oracle: hand-apply the singleton rule twice: ((a)) -> (a) -> a.
        let t = parse_sexp("((a))").unwrap();
        assert_eq!(trim(&t, &std_cfg()), Sexp::atom("a"));
    }

    #[test]
    fn qualified_name_collapses_to_last_component() {
        let t = parse_sexp("(App (Ref (DirPath ((Id ssrbool) (Id ssr) (Id Coq))) (Id eq_mem)) x)")
            .unwrap();
        assert_eq!(print_sexp(&trim(&t, &std_cfg())), "(App eq_mem x)");
    }

    #[test]
    fn keep_category_retains_head() {
        let t = parse_sexp("(App (Ref (DirPath ((Id Coq))) (Id eq_mem)) x y)").unwrap();
        let cfg = TrimConfig::with_variant(TrimVariant::KeepCategory);
        assert_eq!(print_sexp(&trim(&t, &cfg)), "(App (Ref eq_mem) x y)");
    }

    #[test]
    fn location_heads_are_deleted() {
        let t = parse_sexp("(App (loc 1 2) f (loc 3) x y)").unwrap();
        assert_eq!(print_sexp(&trim(&t, &std_cfg())), "(App f x y)");
    }

    #[test]
    fn empty_dirpath_qualified_name() {
        let t = parse_sexp("(CApp (CRef (Ser_Qualid (DirPath ()) (Id mgClassifier))) z)").unwrap();
        // Ser_Qualid collapses, then (CRef mgClassifier) is not a singleton.
        assert_eq!(print_sexp(&trim(&t, &std_cfg())), "(CApp (CRef mgClassifier) z)");
    }

    #[test]
    fn depth_limit_bounds_depth() {
        let t = parse_sexp("(a (b (c (d e))))").unwrap();
        for d in 1..=5 {
            let trimmed = trim(&t, &TrimConfig::with_variant(TrimVariant::DepthLimit { max_depth: d }));
            assert!(trimmed.depth() <= d, "depth {} > {}", trimmed.depth(), d);
        }
    }

    #[test]
    fn random_trim_is_deterministic_and_bounded() {
        let t = parse_sexp("(a (b c d) (e f (g h i)) j k)").unwrap();
        let cfg = TrimConfig::with_variant(TrimVariant::Random { target_node_count: 6, seed: 7 });
        let a = trim(&t, &cfg);
        let b = trim(&t, &cfg);
        assert_eq!(a, b);
        assert!(a.node_count() <= 6);
        // Root survives.
        assert!(a.as_list().is_some());
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(flatten(&Sexp::atom("x")), vec!["x"]);
        // Oracle: hand trace of the pre-order rule.
        let t = parse_sexp("(a (b c))").unwrap();
        assert_eq!(flatten(&t), vec!["(", "a", "(", "b", "c", ")", ")"]);
    }

    #[test]
    fn stats_examples() {
        let lex = Lexicon::default();
        let s = stats(&Sexp::atom("x"), &lex);
        assert_eq!((s.depth, s.node_count), (1, 1));
        let t = parse_sexp("(a (b c))").unwrap();
        let s = stats(&t, &lex);
        assert_eq!((s.depth, s.node_count), (3, 5));
    }

    #[test]
    fn trimming_shortens_an_elaborated_fragment() {
        let raw = "(Prod Anonymous (App (Ref (DirPath ((Id ssrbool) (Id ssr) (Id Coq))) (Id eq_mem)) \
                   (Var (Id L1)) ((App (Ref (DirPath ((Id X))) (Id f)))) (Var (Id L2))))";
        let t = parse_sexp(raw).unwrap();
        let trimmed = trim(&t, &std_cfg());
        assert!(flatten(&trimmed).len() < flatten(&t).len());
        assert!(trimmed.depth() <= t.depth());
    }

    fn arb_tree() -> impl Strategy<Value = Sexp> {
        let leaf = prop_oneof![
            "[a-z][a-z0-9_]{0,5}".prop_map(Sexp::Atom),
            Just(Sexp::atom("loc")),
            Just(Sexp::atom("Ref")),
            Just(Sexp::atom("Id")),
            Just(Sexp::atom("DirPath")),
        ];
        leaf.prop_recursive(4, 48, 5, |inner| {
            prop::collection::vec(inner, 0..5).prop_map(Sexp::List)
        })
    }

    proptest! {
        #[test]
        fn trim_is_idempotent_and_monotone(t in arb_tree()) {
            let cfg = std_cfg();
            let once = trim(&t, &cfg);
            prop_assert_eq!(trim(&once, &cfg), once.clone());
            prop_assert!(once.node_count() <= t.node_count());
            prop_assert!(once.depth() <= t.depth());
        }

        #[test]
        fn flatten_is_balanced(t in arb_tree()) {
            let flat = flatten(&t);
            let mut open = 0i64;
            for item in &flat {
                match item.as_str() {
                    "(" => open += 1,
                    ")" => {
                        open -= 1;
                        prop_assert!(open >= 0);
                    }
                    _ => {}
                }
            }
            prop_assert_eq!(open, 0);
        }

        #[test]
        fn depth_limit_holds(t in arb_tree(), d in 1usize..6) {
            let cfg = TrimConfig::with_variant(TrimVariant::DepthLimit { max_depth: d });
            prop_assert!(trim(&t, &cfg).depth() <= d);
        }
    }
}
