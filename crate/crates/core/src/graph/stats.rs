use std::fmt::Write as _;
use std::time::Duration;

use super::{ArrayVerdict, TypeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassKind {
    Conservative,
    Array,
    Coalesce,
    NonArray,
}

/// Graph-wide counts reported once, before any pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InitialCounts {
    /// Total slot capacity of the heap segments.
    pub maximum_nodes: u64,
    /// Allocated heap objects.
    pub actual_nodes: u64,
    /// Static symbols.
    pub anchored_nodes: u64,
}

/// Counters over heap nodes after one pass. Statics are the anchored nodes
/// and are not counted here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassStats {
    pub label: String,
    pub kind: Option<PassKind>,
    pub nodes: u64,
    pub unmarked: u64,
    pub known: u64,
    pub conjectured: u64,
    pub conjectured_fragments: u64,
    pub known_or_conjectured: u64,
    pub conflicts: u64,
    pub candidates: u64,
    pub elapsed: Duration,
    pub total: Duration,
    pub initial: Option<InitialCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsStyle {
    /// Include the elapsed-time lines. Off for byte-comparable output.
    pub timing: bool,
}

impl Default for StatsStyle {
    fn default() -> Self {
        StatsStyle { timing: true }
    }
}

impl PassStats {
    pub(crate) fn collect(
        g: &TypeGraph,
        label: &str,
        kind: Option<PassKind>,
        elapsed: Duration,
        total: Duration,
    ) -> Self {
        let mut s = PassStats {
            label: label.to_string(),
            kind,
            nodes: 0,
            unmarked: 0,
            known: 0,
            conjectured: 0,
            conjectured_fragments: 0,
            known_or_conjectured: 0,
            conflicts: 0,
            candidates: 0,
            elapsed,
            total,
            initial: None,
        };
        for n in g.heap_nodes() {
            s.nodes += 1;
            if !n.marked {
                s.unmarked += 1;
            }
            match n.inferences.len() {
                _ if n.known => s.known += 1,
                0 if !n.fragments.is_empty() => s.conjectured_fragments += 1,
                0 => {}
                1 => s.conjectured += 1,
                _ => s.conflicts += 1,
            }
            if !n.marked && n.verdict == ArrayVerdict::Undetermined {
                if let Some(ty) = n.single_type() {
                    let tsize = g.catalog.size_of(ty);
                    if tsize > 0 && n.size >= 2 * tsize {
                        s.candidates += 1;
                    }
                }
            }
        }
        s.known_or_conjectured = s.known + s.conjectured;
        s
    }

    pub(crate) fn with_initial(mut self, initial: InitialCounts) -> Self {
        self.initial = Some(initial);
        self
    }

    fn pct(&self, v: u64) -> String {
        // tenths of a percent, truncated
        let tenths = (v * 1000).checked_div(self.nodes).unwrap_or(0);
        format!("{v:<12}({:2}.{}%)", tenths / 10, tenths % 10)
    }

    /// `typegraph: <field> => <value>` lines, one block per pass.
    pub fn render(&self, style: StatsStyle) -> String {
        let mut out = String::new();
        let mut line = |field: &str, value: String| {
            let _ = writeln!(out, "typegraph: {field:>30} => {}", value.trim_end());
        };
        line("pass", self.label.clone());
        if let Some(init) = &self.initial {
            line("maximum nodes", init.maximum_nodes.to_string());
            line("actual nodes", init.actual_nodes.to_string());
            line("anchored nodes", init.anchored_nodes.to_string());
        } else {
            line("nodes", self.nodes.to_string());
            line("unmarked", self.pct(self.unmarked));
            line("known", self.pct(self.known));
            line("conjectured", self.pct(self.conjectured));
            line("conjectured fragments", self.pct(self.conjectured_fragments));
            line("known or conjectured", self.pct(self.known_or_conjectured));
            line("conflicts", self.conflicts.to_string());
            line("candidates", self.candidates.to_string());
        }
        if style.timing {
            line("time elapsed, this pass", format_duration(self.elapsed));
            line("time elapsed, total", format_duration(self.total));
        }
        out.push_str("typegraph:\n");
        out
    }

    /// Share of heap nodes that are known or conjectured, in percent.
    pub fn identified_percent(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.known_or_conjectured as f64 * 100.0 / self.nodes as f64
        }
    }
}

fn format_duration(d: Duration) -> String {
    if d.as_secs() >= 10 {
        format!("{} seconds", d.as_secs())
    } else {
        format!("{} ms", d.as_millis())
    }
}

/// Renders every pass in order.
pub fn render_all(stats: &[PassStats], style: StatsStyle) -> String {
    stats.iter().map(|s| s.render(style)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PassStats {
        PassStats {
            label: "2".into(),
            kind: Some(PassKind::Array),
            nodes: 824313,
            unmarked: 275390,
            known: 255955,
            conjectured: 535919,
            conjectured_fragments: 4049,
            known_or_conjectured: 795923,
            conflicts: 39132,
            candidates: 15597,
            elapsed: Duration::from_secs(81),
            total: Duration::from_secs(1652),
            initial: None,
        }
    }

    #[test]
    fn percentages_truncate_to_tenths() {
        let text = sample().render(StatsStyle::default());
        assert!(text.contains("typegraph:                           pass => 2\n"));
        assert!(text.contains("known or conjectured => 795923      (96.5%)"), "{text}");
        assert!(text.contains("known => 255955      (31.0%)"));
        assert!(text.contains("time elapsed, this pass => 81 seconds"));
        assert!(text.contains("conjectured fragments => 4049        ( 0.4%)"));
        assert!(text.ends_with("typegraph:\n"));
    }

    #[test]
    fn timing_lines_optional() {
        let text = sample().render(StatsStyle { timing: false });
        assert!(!text.contains("elapsed"));
    }
}
