//! Time spans, normalized span sets and integer step functions.
//!
//! Spans are `[start, end)` in milliseconds; the length of a span is
//! `end - start`. A [`SpanSet`] keeps its spans sorted, disjoint and
//! non-adjacent, so its measure never double counts.

use serde::{Deserialize, Serialize};

use crate::event::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: Millis,
    pub end: Millis,
}

impl Span {
    pub fn new(start: Millis, end: Millis) -> Span {
        debug_assert!(start <= end, "span start {start} after end {end}");
        Span { start, end }
    }

    pub fn len(&self) -> Millis {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: Millis) -> bool {
        self.start <= t && t < self.end
    }

    pub fn contains_span(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersect(&self, other: &Span) -> Option<Span> {
        let s = self.start.max(other.start);
        let e = self.end.min(other.end);
        (s < e).then_some(Span { start: s, end: e })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanSet {
    spans: Vec<Span>,
}

impl SpanSet {
    pub fn new() -> SpanSet {
        SpanSet::default()
    }

    pub fn from_span(span: Span) -> SpanSet {
        SpanSet::from_iter([span])
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Total covered length.
    pub fn measure(&self) -> Millis {
        self.spans.iter().map(Span::len).sum()
    }

    pub fn contains(&self, t: Millis) -> bool {
        let idx = self.spans.partition_point(|s| s.end <= t);
        self.spans.get(idx).is_some_and(|s| s.contains(t))
    }

    pub fn insert(&mut self, span: Span) {
        if span.is_empty() {
            return;
        }
        self.spans.push(span);
        self.normalize();
    }

    pub fn union(&self, other: &SpanSet) -> SpanSet {
        self.spans.iter().chain(&other.spans).copied().collect()
    }

    pub fn intersect(&self, other: &SpanSet) -> SpanSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.spans.len() && j < other.spans.len() {
            let (a, b) = (self.spans[i], other.spans[j]);
            if let Some(x) = a.intersect(&b) {
                out.push(x);
            }
            if a.end < b.end {
                i += 1;
            } else {
                j += 1;
            }
        }
        SpanSet { spans: out }
    }

    pub fn subtract(&self, other: &SpanSet) -> SpanSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &a in &self.spans {
            let mut cur = a.start;
            while j < other.spans.len() && other.spans[j].end <= cur {
                j += 1;
            }
            let mut k = j;
            while k < other.spans.len() && other.spans[k].start < a.end {
                let b = other.spans[k];
                if b.start > cur {
                    out.push(Span { start: cur, end: b.start });
                }
                cur = cur.max(b.end);
                k += 1;
            }
            if cur < a.end {
                out.push(Span { start: cur, end: a.end });
            }
        }
        SpanSet { spans: out }
    }

    /// Complement within `frame`.
    pub fn complement_within(&self, frame: Span) -> SpanSet {
        SpanSet::from_span(frame).subtract(self)
    }

    pub fn clip(&self, frame: Span) -> SpanSet {
        self.intersect(&SpanSet::from_span(frame))
    }

    fn normalize(&mut self) {
        self.spans.retain(|s| !s.is_empty());
        self.spans.sort_unstable();
        let mut merged: Vec<Span> = Vec::with_capacity(self.spans.len());
        for s in self.spans.drain(..) {
            match merged.last_mut() {
                Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
                _ => merged.push(s),
            }
        }
        self.spans = merged;
    }
}

impl FromIterator<Span> for SpanSet {
    fn from_iter<I: IntoIterator<Item = Span>>(iter: I) -> Self {
        let mut set = SpanSet { spans: iter.into_iter().collect() };
        set.normalize();
        set
    }
}

/// Piecewise-constant non-negative count over time. The value at `t` is the
/// value of the last breakpoint at or before `t`, zero before the first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFunction {
    pub points: Vec<(Millis, u32)>,
}

impl StepFunction {
    /// Counts how many spans cover each instant. Ends are applied before
    /// starts at equal times, so touching spans never stack.
    pub fn from_spans<'a>(spans: impl IntoIterator<Item = &'a Span>) -> StepFunction {
        let mut deltas: Vec<(Millis, i64)> = Vec::new();
        for s in spans {
            if s.is_empty() {
                continue;
            }
            deltas.push((s.start, 1));
            deltas.push((s.end, -1));
        }
        deltas.sort_unstable();
        let mut points: Vec<(Millis, u32)> = Vec::new();
        let mut level: i64 = 0;
        let mut i = 0;
        while i < deltas.len() {
            let t = deltas[i].0;
            while i < deltas.len() && deltas[i].0 == t {
                level += deltas[i].1;
                i += 1;
            }
            let v = level.max(0) as u32;
            if points.last().map(|p| p.1) != Some(v) {
                points.push((t, v));
            }
        }
        StepFunction { points }
    }

    pub fn value_at(&self, t: Millis) -> u32 {
        let idx = self.points.partition_point(|p| p.0 <= t);
        if idx == 0 { 0 } else { self.points[idx - 1].1 }
    }

    pub fn max(&self) -> u32 {
        self.points.iter().map(|p| p.1).max().unwrap_or(0)
    }

    /// Sequence of values taken (consecutive duplicates removed).
    pub fn values(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Set of instants where the value is at least `k`.
    pub fn at_least(&self, k: u32) -> SpanSet {
        let mut out = Vec::new();
        for (i, &(t, v)) in self.points.iter().enumerate() {
            if v >= k {
                // the last breakpoint always returns to zero for span-built functions
                let end = self.points.get(i + 1).map(|p| p.0).unwrap_or(t);
                out.push(Span { start: t, end });
            }
        }
        out.into_iter().collect()
    }

    /// Pointwise sum.
    pub fn sum(&self, other: &StepFunction) -> StepFunction {
        let mut times: Vec<Millis> = self.points.iter().chain(&other.points).map(|p| p.0).collect();
        times.sort_unstable();
        times.dedup();
        let mut points: Vec<(Millis, u32)> = Vec::new();
        for t in times {
            let v = self.value_at(t) + other.value_at(t);
            if points.last().map(|p| p.1) != Some(v) {
                points.push((t, v));
            }
        }
        StepFunction { points }
    }
}
