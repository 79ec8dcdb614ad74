//! Dense factors over discrete slots, row-major with the last slot fastest.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factor {
    pub scope: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

fn row_major_strides(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cards.len()];
    for d in (0..cards.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * cards[d + 1];
    }
    strides
}

/// Visits every assignment of `cards` in row-major order, tracking one flat
/// offset per stride vector.
fn odometer<const N: usize>(cards: &[usize], strides: [&[usize]; N], mut visit: impl FnMut(usize, [usize; N])) {
    let total: usize = cards.iter().product();
    let mut digits = vec![0usize; cards.len()];
    let mut offsets = [0usize; N];
    for i in 0..total {
        visit(i, offsets);
        for d in (0..cards.len()).rev() {
            digits[d] += 1;
            for (o, s) in offsets.iter_mut().zip(&strides) {
                *o += s[d];
            }
            if digits[d] < cards[d] {
                break;
            }
            for (o, s) in offsets.iter_mut().zip(&strides) {
                *o -= s[d] * cards[d];
            }
            digits[d] = 0;
        }
    }
}

impl Factor {
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(scope.len(), cards.len());
        debug_assert_eq!(values.len(), cards.iter().product::<usize>());
        Factor { scope, cards, values }
    }

    /// Stride of each slot in `scope` within this factor (0 when absent).
    fn strides_for(&self, scope: &[usize]) -> Vec<usize> {
        let own = row_major_strides(&self.cards);
        scope
            .iter()
            .map(|v| self.scope.iter().position(|s| s == v).map_or(0, |i| own[i]))
            .collect()
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(v) {
                scope.push(*v);
                cards.push(*c);
            }
        }
        let a = self.strides_for(&scope);
        let b = other.strides_for(&scope);
        let mut values = vec![0.0; cards.iter().product()];
        odometer(&cards, [&a, &b], |i, [ia, ib]| {
            values[i] = self.values[ia] * other.values[ib];
        });
        Factor { scope, cards, values }
    }

    pub fn sum_out(&self, slot: usize) -> Factor {
        let Some(pos) = self.scope.iter().position(|&s| s == slot) else {
            return self.clone();
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        let mut out_strides = row_major_strides(&cards);
        out_strides.insert(pos, 0);
        let mut values = vec![0.0; cards.iter().product()];
        odometer(&self.cards, [&out_strides], |i, [o]| {
            values[o] += self.values[i];
        });
        Factor { scope, cards, values }
    }

    /// Re-lays the factor over `scope`, broadcasting slots it does not have.
    pub fn arrange(&self, scope: &[usize], cards: &[usize]) -> Vec<f64> {
        let src = self.strides_for(scope);
        let mut values = vec![0.0; cards.iter().product()];
        odometer(cards, [&src], |i, [s]| values[i] = self.values[s]);
        values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_marginalize() {
        // f(a) * g(a, b), a,b binary
        let f = Factor::new(vec![0], vec![2], vec![0.3, 0.7]);
        let g = Factor::new(vec![0, 1], vec![2, 2], vec![0.9, 0.1, 0.2, 0.8]);
        let joint = f.product(&g);
        assert_eq!(joint.scope, vec![0, 1]);
        let expect = [0.27, 0.03, 0.14, 0.56];
        for (x, y) in joint.values.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
        let b = joint.sum_out(0);
        assert_eq!(b.scope, vec![1]);
        assert!((b.values[0] - 0.41).abs() < 1e-15);
        assert!((b.values[1] - 0.59).abs() < 1e-15);
    }

    #[test]
    fn arrange_permutes_and_broadcasts() {
        let f = Factor::new(vec![3, 1], vec![2, 3], vec![0., 1., 2., 3., 4., 5.]);
        let g = f.arrange(&[1, 3], &[3, 2]);
        assert_eq!(g, vec![0., 3., 1., 4., 2., 5.]);
        let h = f.arrange(&[1, 7, 3], &[3, 2, 2]);
        assert_eq!(h[0..4], [0., 3., 0., 3.]);
    }
}
