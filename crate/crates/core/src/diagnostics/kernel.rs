use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{dot, sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth<F> {
    Fixed(F),
    /// Median pairwise distance over the pooled sample.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Rbf,
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec<F> {
    Linear,
    /// `exp(-‖a-b‖² / (2σ²))`.
    Rbf { bandwidth: Bandwidth<F> },
    /// `(γ⟨a,b⟩ + c0)^degree`, `γ = 1/d` when unset.
    Poly {
        degree: u32,
        gamma: Option<F>,
        coef0: F,
    },
}

impl<F: Scalar> KernelSpec<F> {
    pub fn rbf_median() -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Median,
        }
    }

    pub fn poly_default() -> Self {
        KernelSpec::Poly {
            degree: 3,
            gamma: None,
            coef0: F::one(),
        }
    }

    /// Linear, median-bandwidth RBF, and default cubic polynomial.
    pub fn standard_set() -> Vec<Self> {
        vec![KernelSpec::Linear, Self::rbf_median(), Self::poly_default()]
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            KernelSpec::Linear => KernelKind::Linear,
            KernelSpec::Rbf { .. } => KernelKind::Rbf,
            KernelSpec::Poly { .. } => KernelKind::Poly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(s),
            } if !(s > F::zero()) => Err(Error::param(format!("RBF bandwidth must be > 0, got {s}"))),
            KernelSpec::Poly { degree: 0, .. } => Err(Error::param("polynomial degree must be >= 1")),
            KernelSpec::Poly {
                gamma: Some(g), ..
            } if !(g > F::zero()) => Err(Error::param(format!("polynomial gamma must be > 0, got {g}"))),
            _ => Ok(()),
        }
    }
}

impl<F: Scalar> fmt::Display for KernelSpec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Median,
            } => f.write_str("rbf"),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(s),
            } => write!(f, "rbf(sigma={s})"),
            KernelSpec::Poly {
                degree,
                gamma,
                coef0,
            } => match gamma {
                None if *degree == 3 && *coef0 == F::one() => f.write_str("poly"),
                None => write!(f, "poly(degree={degree},coef0={coef0})"),
                Some(g) => write!(f, "poly(degree={degree},gamma={g},coef0={coef0})"),
            },
        }
    }
}

impl<F: Scalar> FromStr for KernelSpec<F> {
    type Err = Error;

    /// `linear`/`lin`, `rbf` (median bandwidth), `rbf:<sigma>`, `poly`.
    fn from_str(s: &str) -> Result<Self> {
        let spec = match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lin" => KernelSpec::Linear,
            "rbf" => Self::rbf_median(),
            "poly" => Self::poly_default(),
            other => match other.strip_prefix("rbf:") {
                Some(sigma) => KernelSpec::Rbf {
                    bandwidth: Bandwidth::Fixed(F::of(
                        sigma
                            .parse::<f64>()
                            .map_err(|_| Error::param(format!("bad RBF bandwidth {sigma:?}")))?,
                    )),
                },
                None => return Err(Error::param(format!("unknown kernel {s:?}"))),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Kernel with every parameter resolved for one pair of samples.
#[derive(Clone, Copy)]
enum Resolved<F> {
    Linear,
    Rbf { inv_two_sigma_sq: F },
    Poly { degree: i32, gamma: F, coef0: F },
}

impl<F: Scalar> Resolved<F> {
    fn eval(&self, a: &[F], b: &[F]) -> F {
        match *self {
            Resolved::Linear => dot(a, b),
            Resolved::Rbf { inv_two_sigma_sq } => (-sq_dist(a, b) * inv_two_sigma_sq).exp(),
            Resolved::Poly {
                degree,
                gamma,
                coef0,
            } => (gamma * dot(a, b) + coef0).powi(degree),
        }
    }
}

fn check_dims<F>(x: &[&[F]], y: &[&[F]]) -> Result<usize> {
    let d = x.first().or(y.first()).map_or(0, |r| r.len());
    if let Some(r) = x.iter().chain(y).find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "row of length {} among rows of length {d}",
            r.len()
        )));
    }
    Ok(d)
}

/// Median of pairwise Euclidean distances over `X ∪ Y` (all `i < j`).
pub fn median_bandwidth<F: Scalar>(x: &[&[F]], y: &[&[F]]) -> Result<F> {
    check_dims(x, y)?;
    let pooled: Vec<&[F]> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    if n < 2 {
        return Err(Error::DegenerateBandwidth);
    }
    let mut dists: Vec<F> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let pooled = &pooled;
            (i + 1..n).map(move |j| sq_dist(pooled[i], pooled[j]).sqrt())
        })
        .collect();
    let m = dists.len();
    let cmp = |a: &F, b: &F| a.partial_cmp(b).expect("finite distances");
    let (_, &mut hi, _) = dists.select_nth_unstable_by(m / 2, cmp);
    let median = if m % 2 == 1 {
        hi
    } else {
        let lo = dists[..m / 2]
            .iter()
            .copied()
            .fold(F::neg_infinity(), F::max);
        (lo + hi) / F::of(2.0)
    };
    if !(median > F::zero()) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(median)
}

/// Mean of the Gram block `k(A, B)`. Row sums are computed in parallel and
/// then added in row order, so the result does not depend on thread count.
fn block_mean<F: Scalar>(a: &[&[F]], b: &[&[F]], k: Resolved<F>) -> F {
    let row_sums: Vec<F> = a
        .par_iter()
        .map(|ra| b.iter().fold(F::zero(), |acc, rb| acc + k.eval(ra, rb)))
        .collect();
    let total = row_sums.into_iter().fold(F::zero(), |acc, v| acc + v);
    total / (F::count(a.len()) * F::count(b.len()))
}

/// Biased (V-statistic) squared MMD: `mean k(X,X) + mean k(Y,Y) − 2 mean k(X,Y)`,
/// diagonals included.
pub fn mmd<F: Scalar>(x: &[&[F]], y: &[&[F]], kernel: &KernelSpec<F>) -> Result<F> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySelection);
    }
    kernel.validate()?;
    let d = check_dims(x, y)?;
    let resolved = match *kernel {
        KernelSpec::Linear => Resolved::Linear,
        KernelSpec::Rbf { bandwidth } => {
            let sigma = match bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::Median => median_bandwidth(x, y)?,
            };
            Resolved::Rbf {
                inv_two_sigma_sq: F::one() / (F::of(2.0) * sigma * sigma),
            }
        }
        KernelSpec::Poly {
            degree,
            gamma,
            coef0,
        } => Resolved::Poly {
            degree: degree as i32,
            gamma: gamma.unwrap_or_else(|| F::one() / F::count(d)),
            coef0,
        },
    };
    let kxx = block_mean(x, x, resolved);
    let kyy = block_mean(y, y, resolved);
    let kxy = block_mean(x, y, resolved);
    Ok(kxx + kyy - F::of(2.0) * kxy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn view(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn identical_inputs_give_zero() {
        let rows = vec![vec![0.1, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]];
        let x = view(&rows);
        for k in KernelSpec::<f64>::standard_set() {
            assert_eq!(mmd(&x, &x, &k).unwrap(), 0.0, "{k}");
        }
    }

    #[test]
    fn singleton_linear_case() {
        let a = [vec![0.0, 0.0]];
        let b = [vec![1.0, 0.0]];
        assert_eq!(mmd(&view(&a), &view(&b), &KernelSpec::Linear).unwrap(), 1.0);
    }

    #[test]
    fn median_bandwidth_cases() {
        let pts = |v: &[f64]| v.iter().map(|&p| vec![p]).collect::<Vec<_>>();
        let a = pts(&[0.0]);
        let b = pts(&[1.0]);
        assert_eq!(median_bandwidth(&view(&a), &view(&b)).unwrap(), 1.0);
        let c = pts(&[0.0, 1.0]);
        let d = pts(&[3.0]);
        assert_eq!(median_bandwidth(&view(&c), &view(&d)).unwrap(), 2.0);
        let e = pts(&[2.0, 2.0]);
        assert!(matches!(
            median_bandwidth(&view(&e), &view(&e)),
            Err(Error::DegenerateBandwidth)
        ));
        let even = pts(&[0.0, 1.0, 3.0, 7.0]);
        // distances 1,3,7,2,6,4 -> median (3+4)/2
        assert_eq!(median_bandwidth(&view(&even), &[]).unwrap(), 3.5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = [vec![0.0, 0.0]];
        let b = [vec![1.0]];
        assert!(matches!(
            mmd(&view(&a), &view(&b), &KernelSpec::Linear),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kernel_names_parse() {
        assert_eq!("lin".parse::<KernelSpec<f64>>().unwrap(), KernelSpec::Linear);
        assert_eq!("rbf".parse::<KernelSpec<f64>>().unwrap().to_string(), "rbf");
        assert_eq!("poly".parse::<KernelSpec<f64>>().unwrap().to_string(), "poly");
        assert!("rbf:0".parse::<KernelSpec<f64>>().is_err());
        assert!("cosine".parse::<KernelSpec<f64>>().is_err());
    }

    fn matrix(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n)
    }

    proptest! {
        #[test]
        fn mmd_symmetric_non_negative(x in matrix(6, 3), y in matrix(5, 3)) {
            for k in KernelSpec::<f64>::standard_set() {
                let a = mmd(&view(&x), &view(&y), &k);
                let b = mmd(&view(&y), &view(&x), &k);
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert!(a >= -1e-9, "{} gave {}", k, a);
                    prop_assert!((a - b).abs() < 1e-9);
                }
                prop_assert_eq!(mmd(&view(&x), &view(&x), &k).unwrap_or(0.0), 0.0);
            }
        }

        #[test]
        fn linear_mmd_monotone_in_shift(x in matrix(8, 3), dir in prop::collection::vec(-1.0f64..1.0, 3), s1 in 0.1f64..2.0, gap in 0.1f64..2.0) {
            let n: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let shift = |s: f64| x.iter().map(|r| r.iter().zip(&dir).map(|(a, b)| a + s * b / n).collect::<Vec<_>>()).collect::<Vec<_>>();
            let y1 = shift(s1);
            let y2 = shift(s1 + gap);
            let m1 = mmd(&view(&x), &view(&y1), &KernelSpec::Linear).unwrap();
            let m2 = mmd(&view(&x), &view(&y2), &KernelSpec::Linear).unwrap();
            prop_assert!(m1 < m2);
            prop_assert!((m1 - s1 * s1).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_mmd_tracks_mean_shift() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let delta = [1.0, -0.5, 0.25, 0.0];
        let draw = |rng: &mut ChaCha8Rng, shift: &[f64]| -> Vec<Vec<f64>> {
            (0..2000)
                .map(|_| shift.iter().map(|s| {
                    let z: f64 = StandardNormal.sample(rng);
                    s + z
                }).collect())
                .collect()
        };
        let x = draw(&mut rng, &[0.0; 4]);
        let y = draw(&mut rng, &delta);
        let got = mmd(&view(&x), &view(&y), &KernelSpec::Linear).unwrap();
        let want: f64 = delta.iter().map(|v| v * v).sum();
        assert!((got - want).abs() <= 0.1 * want, "{got} vs {want}");
        assert_abs_diff_eq!(want, 1.3125, epsilon = 1e-12);
    }
}
