use std::collections::VecDeque;
use std::fmt;

/// Id of the artificial root token, which sits at the end of the buffer.
pub const ROOT: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transition {
    Shift,
    Swap,
    /// Buffer front becomes head of the stack top.
    Left(usize),
    /// Second stack item becomes head of the stack top.
    Right(usize),
}

impl Transition {
    /// Position in the scorer output: shift, swap, then a left/right pair
    /// per label.
    pub fn index(self) -> usize {
        match self {
            Transition::Shift => 0,
            Transition::Swap => 1,
            Transition::Left(l) => 2 + 2 * l,
            Transition::Right(l) => 3 + 2 * l,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Transition::Shift,
            1 => Transition::Swap,
            _ if i.is_multiple_of(2) => Transition::Left((i - 2) / 2),
            _ => Transition::Right((i - 3) / 2),
        }
    }

    pub fn count(labels: usize) -> usize {
        2 + 2 * labels
    }

    pub fn label(self) -> Option<usize> {
        match self {
            Transition::Left(l) | Transition::Right(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::Shift => f.write_str("SHIFT"),
            Transition::Swap => f.write_str("SWAP"),
            Transition::Left(l) => write!(f, "LEFT-ARC({})", l),
            Transition::Right(l) => write!(f, "RIGHT-ARC({})", l),
        }
    }
}

/// Unlabelled shape of a transition, used when the label set is irrelevant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Shift,
    Swap,
    Left,
    Right,
}

impl From<Transition> for Move {
    fn from(t: Transition) -> Self {
        match t {
            Transition::Shift => Move::Shift,
            Transition::Swap => Move::Swap,
            Transition::Left(_) => Move::Left,
            Transition::Right(_) => Move::Right,
        }
    }
}

/// Parser state over tokens `1..=n` plus the root `0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    /// Top of the stack is the last element.
    pub stack: Vec<usize>,
    pub buffer: VecDeque<usize>,
    /// `heads[d] = Some((h, label))` once `d` is attached.
    pub heads: Vec<Option<(usize, usize)>>,
}

impl Configuration {
    pub fn new(n: usize) -> Self {
        let mut buffer: VecDeque<usize> = (1..=n).collect();
        buffer.push_back(ROOT);
        Configuration {
            stack: Vec::new(),
            buffer,
            heads: vec![None; n + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn s0(&self) -> Option<usize> {
        self.stack.last().copied()
    }

    pub fn s1(&self) -> Option<usize> {
        self.stack.len().checked_sub(2).map(|i| self.stack[i])
    }

    pub fn b0(&self) -> Option<usize> {
        self.buffer.front().copied()
    }

    pub fn is_terminal(&self) -> bool {
        self.stack.is_empty() && self.buffer.len() == 1 && self.buffer[0] == ROOT
    }

    /// Which moves are allowed. The root never enters the stack and may only
    /// take a dependent when that dependent is the last unattached token, so
    /// every terminal configuration holds a tree with a single root. Swap
    /// moves the stack top behind the buffer front, and only when that
    /// inverts their original order, which bounds the number of swaps.
    pub fn legal(&self, m: Move) -> bool {
        let (s0, s1, b0) = (self.s0(), self.s1(), self.b0());
        match m {
            Move::Shift => matches!(b0, Some(b) if b != ROOT),
            Move::Left => match (s0, b0) {
                (Some(_), Some(ROOT)) => self.stack.len() == 1,
                (Some(_), Some(_)) => true,
                _ => false,
            },
            Move::Right => s1.is_some(),
            Move::Swap => matches!((s0, b0), (Some(s), Some(b)) if b != ROOT && s < b),
        }
    }

    pub fn legal_transitions(&self, labels: usize) -> Vec<Transition> {
        let mut out = Vec::new();
        if self.legal(Move::Shift) {
            out.push(Transition::Shift);
        }
        if self.legal(Move::Swap) {
            out.push(Transition::Swap);
        }
        let (left, right) = (self.legal(Move::Left), self.legal(Move::Right));
        for l in 0..labels {
            if left {
                out.push(Transition::Left(l));
            }
            if right {
                out.push(Transition::Right(l));
            }
        }
        out
    }

    /// Apply `t`, returning the created arc `(head, label, dependent)` if any.
    ///
    /// # Panics
    /// If `t` is not legal in this configuration.
    pub fn apply(&mut self, t: Transition) -> Option<(usize, usize, usize)> {
        assert!(self.legal(t.into()), "illegal transition {} in {:?}", t, self);
        match t {
            Transition::Shift => {
                let b = self.buffer.pop_front().expect("legal shift");
                self.stack.push(b);
                None
            }
            Transition::Swap => {
                let s0 = self.stack.pop().expect("legal swap");
                self.buffer.insert(1, s0);
                None
            }
            Transition::Left(l) => {
                let d = self.stack.pop().expect("legal left-arc");
                let h = self.buffer[0];
                self.heads[d] = Some((h, l));
                Some((h, l, d))
            }
            Transition::Right(l) => {
                let d = self.stack.pop().expect("legal right-arc");
                let h = *self.stack.last().expect("legal right-arc");
                self.heads[d] = Some((h, l));
                Some((h, l, d))
            }
        }
    }
}
