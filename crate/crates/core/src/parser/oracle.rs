use super::transition::{Configuration, Move, Transition, ROOT};

/// Gold tree in the form the oracle needs: heads and label ids per token
/// (index 0 unused) and each token's position in an in-order traversal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldTree {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
    pub proj: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl GoldTree {
    /// `heads` and `labels` are indexed by token id; entry 0 is ignored.
    pub fn new(heads: Vec<usize>, labels: Vec<usize>) -> Self {
        let n = heads.len() - 1;
        let mut children = vec![Vec::new(); n + 1];
        for d in 1..=n {
            children[heads[d]].push(d);
        }
        let proj = projective_order(&children, n);
        GoldTree {
            heads,
            labels,
            proj,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the tree can be drawn without crossing arcs.
    pub fn is_projective(&self) -> bool {
        (1..=self.len()).all(|d| self.proj[d] == d)
    }

    fn pending_children(&self, c: &Configuration, h: usize) -> u32 {
        self.children[h].iter().filter(|&&d| c.heads[d].is_none()).count() as u32
    }
}

/// In-order position of every token, with the root placed last so that it
/// mirrors the root's place at the end of the buffer.
fn projective_order(children: &[Vec<usize>], n: usize) -> Vec<usize> {
    enum Step {
        Visit(usize),
        Emit(usize),
    }
    let mut proj = vec![0; n + 1];
    let mut next = 1;
    let mut work = vec![Step::Visit(ROOT)];
    while let Some(step) = work.pop() {
        match step {
            Step::Emit(h) => {
                proj[h] = next;
                next += 1;
            }
            Step::Visit(h) => {
                // Children are sorted; push right children, the head, then
                // left children, all reversed, so they pop in order.
                let kids = &children[h];
                let split = kids.partition_point(|&d| d < h);
                work.extend(kids[split..].iter().rev().map(|&d| Step::Visit(d)));
                if h != ROOT {
                    work.push(Step::Emit(h));
                }
                work.extend(kids[..split].iter().rev().map(|&d| Step::Visit(d)));
            }
        }
    }
    proj[ROOT] = n + 1;
    proj
}

/// Cost of every legal transition: the number of gold arcs it makes
/// unreachable, plus one for a wrong label on an otherwise correct arc.
/// Swap is judged statically from the projective order; whenever it is
/// warranted, every other transition costs at least one. Shifting over a
/// stack top that could be correctly attached also costs at least one.
pub fn oracle_costs(c: &Configuration, gold: &GoldTree, labels: usize) -> Vec<(Transition, u32)> {
    let legal = c.legal_transitions(labels);
    let swap_due = match (c.s0(), c.b0()) {
        (Some(s0), Some(b0)) => c.legal(Move::Swap) && gold.proj[s0] > gold.proj[b0],
        _ => false,
    };
    let arc = |head: usize, d: usize, l: usize| -> u32 {
        let wrong_head = gold.heads[d] != head;
        wrong_head as u32 + gold.pending_children(c, d) + (!wrong_head && gold.labels[d] != l) as u32
    };
    // A complete stack top next to its gold head is reduced before anything
    // else is shifted over it: under reordering, a delayed reduction can
    // block arcs that a projective analysis would still consider reachable.
    let reducible = c.s0().is_some_and(|s0| {
        gold.pending_children(c, s0) == 0
            && (c.legal(Move::Left) && gold.heads[s0] == c.buffer[0]
                || c.legal(Move::Right) && Some(gold.heads[s0]) == c.s1())
    });
    let shift = if c.legal(Move::Shift) {
        shift_cost(c, gold).max(reducible as u32)
    } else {
        0
    };

    legal
        .into_iter()
        .map(|t| {
            let cost = match t {
                Transition::Swap => return (t, if swap_due { 0 } else { 1 }),
                Transition::Shift => shift,
                Transition::Left(l) => arc(c.buffer[0], c.s0().unwrap(), l),
                Transition::Right(l) => arc(c.s1().unwrap(), c.s0().unwrap(), l),
            };
            (t, if swap_due { cost.max(1) } else { cost })
        })
        .collect()
}

/// Arcs lost by pushing the buffer front: its dependents on the stack and
/// its head anywhere on the stack below the top. A buffer front that a
/// later buffer item precedes in projective order will be swapped back out
/// of the way, so pushing it loses nothing yet.
fn shift_cost(c: &Configuration, gold: &GoldTree) -> u32 {
    let b = c.buffer[0];
    let unsettled = c
        .buffer
        .iter()
        .skip(1)
        .any(|&x| x != ROOT && gold.proj[x] < gold.proj[b]);
    if unsettled {
        return 0;
    }
    let top = c.s0();
    let lost_head = c
        .stack
        .iter()
        .any(|&h| Some(h) != top && gold.heads[b] == h) as u32;
    let lost_deps = c.stack.iter().filter(|&&d| gold.heads[d] == b).count() as u32;
    lost_head + lost_deps
}

/// The transition that keeps the parser on a canonical path to the gold
/// tree: attach a complete stack top to its head, swap items that are out
/// of projective order, otherwise shift.
pub fn static_transition(c: &Configuration, gold: &GoldTree) -> Option<Transition> {
    if c.is_terminal() {
        return None;
    }
    if let Some(s0) = c.s0() {
        let complete = gold.pending_children(c, s0) == 0;
        if complete && c.legal(Move::Left) && gold.heads[s0] == c.buffer[0] {
            return Some(Transition::Left(gold.labels[s0]));
        }
        if complete && c.legal(Move::Right) && Some(gold.heads[s0]) == c.s1() {
            return Some(Transition::Right(gold.labels[s0]));
        }
        if c.legal(Move::Swap) && gold.proj[s0] > gold.proj[c.buffer[0]] {
            return Some(Transition::Swap);
        }
    }
    if c.legal(Move::Shift) {
        Some(Transition::Shift)
    } else {
        None
    }
}

/// Static while every transition so far matched [`static_transition`],
/// dynamic afterwards: on the canonical path the static choice is the only
/// zero-cost transition; once the parser has strayed, [`oracle_costs`]
/// decides.
#[derive(Clone, Debug)]
pub struct Oracle<'g> {
    gold: &'g GoldTree,
    on_path: bool,
}

impl<'g> Oracle<'g> {
    pub fn new(gold: &'g GoldTree) -> Self {
        Oracle { gold, on_path: true }
    }

    pub fn on_path(&self) -> bool {
        self.on_path
    }

    pub fn costs(&self, c: &Configuration, labels: usize) -> Vec<(Transition, u32)> {
        let mut costs = oracle_costs(c, self.gold, labels);
        if self.on_path {
            if let Some(best) = static_transition(c, self.gold) {
                for (t, cost) in &mut costs {
                    *cost = if *t == best { 0 } else { (*cost).max(1) };
                }
            }
        }
        costs
    }

    /// Record that `t` is about to be applied to `c`.
    pub fn observe(&mut self, c: &Configuration, t: Transition) {
        if self.on_path && static_transition(c, self.gold) != Some(t) {
            self.on_path = false;
        }
    }
}

/// Transitions of minimum cost, in scorer order.
pub fn min_cost(costs: &[(Transition, u32)]) -> Vec<Transition> {
    let best = costs.iter().map(|(_, c)| *c).min();
    costs
        .iter()
        .filter(|(_, c)| Some(*c) == best)
        .map(|(t, _)| *t)
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use crate::numeric::rng_from_seed;

    /// Uniformly shaped random tree over `n` tokens; frequently
    /// non-projective.
    pub(crate) fn random_tree(n: usize, labels: usize, rng: &mut impl Rng) -> GoldTree {
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(rng);
        let mut heads = vec![0; n + 1];
        for (i, &d) in order.iter().enumerate() {
            heads[d] = if i == 0 { ROOT } else { order[rng.gen_range(0..i)] };
        }
        let labels = (0..=n).map(|_| rng.gen_range(0..labels)).collect();
        GoldTree::new(heads, labels)
    }

    /// Follow minimum-cost transitions, choosing among ties with `pick`.
    pub(crate) fn follow(gold: &GoldTree, labels: usize, mut pick: impl FnMut(&[Transition]) -> Transition) -> Configuration {
        let mut c = Configuration::new(gold.len());
        let mut oracle = Oracle::new(gold);
        let bound = 2 * gold.len() + gold.len() * gold.len() + 2;
        for _ in 0..bound {
            if c.is_terminal() {
                break;
            }
            let best = min_cost(&oracle.costs(&c, labels));
            let t = pick(&best);
            oracle.observe(&c, t);
            c.apply(t);
        }
        assert!(c.is_terminal(), "oracle did not terminate");
        c
    }

    fn reproduces(gold: &GoldTree, c: &Configuration) -> bool {
        (1..=gold.len()).all(|d| c.heads[d] == Some((gold.heads[d], gold.labels[d])))
    }

    #[test]
    fn projective_order_examples() {
        // 1 <- 2 -> 3 is already in order.
        let g = GoldTree::new(vec![0, 2, 0, 2], vec![0; 4]);
        assert_eq!(&g.proj[1..], &[1, 2, 3]);
        assert!(g.is_projective());
        // Crossing arcs 1 -> 3 and 2 -> 4 with root 2 force a reordering.
        let g = GoldTree::new(vec![0, 2, 0, 1, 2], vec![0; 5]);
        assert_eq!(&g.proj[1..], &[1, 3, 2, 4]);
        assert!(!g.is_projective());
    }

    #[test]
    fn ties_resolved_any_way_reach_gold() {
        let mut rng = rng_from_seed(17);
        let mut nonprojective = 0;
        for trial in 0..3000 {
            let n = 1 + trial % 30;
            let gold = random_tree(n, 3, &mut rng);
            nonprojective += !gold.is_projective() as usize;
            let mut tie_rng = rng_from_seed(trial as u64);
            let c = follow(&gold, 3, |best| *best.choose(&mut tie_rng).unwrap());
            assert!(reproduces(&gold, &c), "failed on {:?}", gold.heads);
        }
        assert!(nonprojective > 1000);
    }

    fn loss(gold: &GoldTree, c: &Configuration) -> u32 {
        (1..=gold.len())
            .filter(|&d| c.heads[d] != Some((gold.heads[d], gold.labels[d])))
            .count() as u32
    }

    #[test]
    fn dynamic_costs_complete_on_projective_trees() {
        let mut rng = rng_from_seed(23);
        let mut seen = 0;
        while seen < 500 {
            let gold = random_tree(1 + seen % 9, 2, &mut rng);
            if !gold.is_projective() {
                continue;
            }
            seen += 1;
            let mut c = Configuration::new(gold.len());
            while !c.is_terminal() {
                let best = min_cost(&oracle_costs(&c, &gold, 2));
                c.apply(*best.choose(&mut rng).unwrap());
            }
            assert!(reproduces(&gold, &c), "failed on {:?}", gold.heads);
        }
    }

    #[test]
    fn charged_cost_bounds_final_loss() {
        let mut rng = rng_from_seed(31);
        for trial in 0..2000 {
            let gold = random_tree(2 + trial % 10, 2, &mut rng);
            let mut c = Configuration::new(gold.len());
            let mut oracle = Oracle::new(&gold);
            let mut charged = 0;
            let mut steps = 0;
            while !c.is_terminal() {
                let costs = oracle.costs(&c, 2);
                let (t, cost) = if steps < 3 && rng.gen_bool(0.5) {
                    *costs.choose(&mut rng).unwrap()
                } else {
                    let best = min_cost(&costs);
                    let t = *best.choose(&mut rng).unwrap();
                    *costs.iter().find(|(x, _)| *x == t).unwrap()
                };
                charged += cost;
                oracle.observe(&c, t);
                c.apply(t);
                steps += 1;
            }
            assert!(loss(&gold, &c) <= charged, "{:?}: loss {} > charged {}", gold.heads, loss(&gold, &c), charged);
        }
    }

    #[test]
    fn wrong_left_arc_costs_at_least_one() {
        // Gold: 1 <- 3, 2 <- 3, 3 root. Stack [1], buffer [2, 3, root]:
        // attaching 1 to 2 loses its arc to 3.
        let gold = GoldTree::new(vec![0, 3, 3, 0], vec![0, 0, 0, 0]);
        let mut c = Configuration::new(3);
        c.apply(Transition::Shift);
        let costs = oracle_costs(&c, &gold, 1);
        let left = costs.iter().find(|(t, _)| *t == Transition::Left(0)).unwrap().1;
        assert!(left >= 1);
        assert_eq!(costs.iter().find(|(t, _)| *t == Transition::Shift).unwrap().1, 0);
    }

    #[test]
    fn wrong_label_adds_one() {
        let gold = GoldTree::new(vec![0, 2, 0], vec![0, 1, 0]);
        let mut c = Configuration::new(2);
        c.apply(Transition::Shift);
        let costs = oracle_costs(&c, &gold, 2);
        let cost = |t| costs.iter().find(|(x, _)| *x == t).unwrap().1;
        assert_eq!(cost(Transition::Left(1)), 0);
        assert_eq!(cost(Transition::Left(0)), 1);
    }

    /// Exhaustive search for any transition sequence producing `gold`.
    fn reachable(c: &Configuration, gold: &GoldTree, depth: usize) -> bool {
        if c.is_terminal() {
            return (1..=gold.len()).all(|d| c.heads[d].map(|(h, _)| h) == Some(gold.heads[d]));
        }
        if depth == 0 {
            return false;
        }
        c.legal_transitions(1).into_iter().any(|t| {
            let mut next = c.clone();
            next.apply(t);
            if let Some((h, _, d)) = next.heads.iter().enumerate().find_map(|(d, a)| {
                a.filter(|_| c.heads[d].is_none()).map(|(h, l)| (h, l, d))
            }) {
                if gold.heads[d] != h {
                    return false;
                }
            }
            reachable(&next, gold, depth - 1)
        })
    }

    #[test]
    fn swap_enables_crossing_arc() {
        // 1 -> 3 crosses 2 -> 4 (root 2).
        let gold = GoldTree::new(vec![0, 2, 0, 1, 2], vec![0; 5]);
        let c = Configuration::new(4);
        assert!(reachable(&c, &gold, 16));
        let c = follow(&gold, 1, |best| best[0]);
        assert!(reproduces(&gold, &c));
    }

    #[test]
    fn projective_three_word_unique_zero_cost_sequence() {
        // Every length-limited sequence that reaches the gold tree uses only
        // zero-cost transitions, and the greedy oracle finds one of them.
        let gold = GoldTree::new(vec![0, 2, 0, 2], vec![0; 4]);
        let mut sequences = Vec::new();
        let mut stack = vec![(Configuration::new(3), Vec::new())];
        while let Some((c, seq)) = stack.pop() {
            if c.is_terminal() {
                if reproduces(&gold, &c) {
                    sequences.push(seq);
                }
                continue;
            }
            if seq.len() >= 6 {
                continue;
            }
            for t in c.legal_transitions(1) {
                let mut next = c.clone();
                next.apply(t);
                let mut s = seq.clone();
                s.push(t);
                stack.push((next, s));
            }
        }
        assert_eq!(sequences.len(), 1);
        let oracle = follow(&gold, 1, |best| best[0]);
        assert!(reproduces(&gold, &oracle));
        let mut c = Configuration::new(3);
        for t in &sequences[0] {
            let costs = oracle_costs(&c, &gold, 1);
            assert_eq!(costs.iter().find(|(x, _)| x == t).unwrap().1, 0);
            c.apply(*t);
        }
    }
}
