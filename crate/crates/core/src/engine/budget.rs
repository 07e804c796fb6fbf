use serde::{Deserialize, Serialize};

/// Default run budget in equivalent tokens.
pub const DEFAULT_BUDGET: f64 = 10_000_000.0;

/// Token accounting in equivalent tokens: `T_eq = T_out + 0.25 * T_in`.
///
/// Totals are integers, so `4 * T_eq` is exact and is what comparisons use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub tokens_in_total: u64,
    pub tokens_out_total: u64,
    pub budget_eq: f64,
}

impl Default for BudgetLedger {
    fn default() -> Self {
        Self::new(DEFAULT_BUDGET)
    }
}

impl BudgetLedger {
    pub fn new(budget_eq: f64) -> Self {
        Self {
            tokens_in_total: 0,
            tokens_out_total: 0,
            budget_eq,
        }
    }

    pub fn charge(&mut self, tokens_in: u64, tokens_out: u64) {
        self.tokens_in_total += tokens_in;
        self.tokens_out_total += tokens_out;
    }

    /// Four times the equivalent token count.
    pub fn quarter_tokens(&self) -> u64 {
        4 * self.tokens_out_total + self.tokens_in_total
    }

    pub fn equivalent_tokens(&self) -> f64 {
        self.quarter_tokens() as f64 / 4.0
    }

    pub fn exhausted(&self) -> bool {
        self.equivalent_tokens() >= self.budget_eq
    }
}

pub fn equivalent_tokens(tokens_in: u64, tokens_out: u64) -> f64 {
    tokens_out as f64 + 0.25 * tokens_in as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_tokens_count_a_quarter() {
        let mut b = BudgetLedger::new(1e7);
        b.charge(4000, 1000);
        assert_eq!(b.equivalent_tokens(), 2000.0);
        assert_eq!(equivalent_tokens(4000, 1000), 2000.0);
        b.charge(1, 0);
        assert_eq!(b.equivalent_tokens(), 2000.25);
    }

    #[test]
    fn zero_budget_is_already_exhausted() {
        assert!(BudgetLedger::new(0.0).exhausted());
        let mut b = BudgetLedger::new(10.0);
        assert!(!b.exhausted());
        b.charge(0, 10);
        assert!(b.exhausted());
    }
}
