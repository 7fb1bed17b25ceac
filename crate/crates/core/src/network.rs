//! Reversible mass-action reaction networks with detailed balance.
//!
//! A network stores the reactant exponents `alpha` and product exponents
//! `beta` (both `N x M`, non-negative integers), the rate constants of every
//! reaction and a set of internal energies `U` chosen so that
//! `ln(k+/k-) + sum_i sigma_il U_i = 0` for every reaction `l`. With that
//! gauge the free energy density
//!
//! ```text
//! F(c) = sum_i c_i (ln c_i - 1) + c_i U_i
//! ```
//!
//! is a Lyapunov function of the kinetics, and the chemical potential is
//! `mu_i = ln c_i + U_i`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Pivot tolerance for the null-space elimination.
const PIVOT_TOL: f64 = 1e-12;
/// Largest least-squares residual accepted as detailed balance.
const DETAILED_BALANCE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network needs at least one species")]
    NoSpecies,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("rate constant {name}[{reaction}] = {value} must be positive")]
    NonPositiveRate {
        name: &'static str,
        reaction: usize,
        value: f64,
    },
    #[error("reaction {0} has identical reactant and product sides")]
    TrivialReaction(usize),
    #[error(
        "rate constants violate detailed balance (Wegscheider residual {residual:.3e})"
    )]
    NoDetailedBalance { residual: f64 },
    #[error("concentration of species {index} is {value}; must be strictly positive")]
    NonPositiveConcentration { index: usize, value: f64 },
    #[error("concentration vector has length {got}, network has {expected} species")]
    WrongLength { expected: usize, got: usize },
}

/// Strictly positive concentration vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Concentration(Vec<f64>);

impl Concentration {
    pub fn new(values: Vec<f64>) -> Result<Self, NetworkError> {
        check_positive(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for Concentration {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_positive(values: &[f64]) -> Result<(), NetworkError> {
    match values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
    {
        Some((index, &value)) => Err(NetworkError::NonPositiveConcentration { index, value }),
        None => Ok(()),
    }
}

/// Sparse view of one reaction column, used in the hot loops.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ReactionTerms {
    /// `(species, alpha)` with alpha > 0.
    pub reactants: Vec<(usize, i32)>,
    /// `(species, beta)` with beta > 0.
    pub products: Vec<(usize, i32)>,
    /// `(species, sigma)` with sigma != 0.
    pub net: Vec<(usize, i32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species_names: Vec<String>,
    /// Reactant exponents, `alpha[i][l]`.
    alpha: Vec<Vec<u32>>,
    /// Product exponents, `beta[i][l]`.
    beta: Vec<Vec<u32>>,
    k_plus: Vec<f64>,
    k_minus: Vec<f64>,
    internal_energy: Vec<f64>,
    invariant_basis: Vec<Vec<f64>>,
    terms: Vec<ReactionTerms>,
}

impl ReactionNetwork {
    /// Builds a network from exponent matrices (`N x M`, indexed `[species][reaction]`)
    /// and rate constants. Internal energies and invariants are derived.
    pub fn new(
        species_names: Vec<String>,
        alpha: Vec<Vec<u32>>,
        beta: Vec<Vec<u32>>,
        k_plus: Vec<f64>,
        k_minus: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let n = species_names.len();
        if n == 0 {
            return Err(NetworkError::NoSpecies);
        }
        let m = k_plus.len();
        if k_minus.len() != m {
            return Err(NetworkError::Shape(format!(
                "{} forward and {} backward rate constants",
                m,
                k_minus.len()
            )));
        }
        for (name, mat) in [("alpha", &alpha), ("beta", &beta)] {
            if mat.len() != n || mat.iter().any(|row| row.len() != m) {
                return Err(NetworkError::Shape(format!(
                    "{name} must be {n} x {m} (species x reactions)"
                )));
            }
        }
        for l in 0..m {
            if (0..n).all(|i| alpha[i][l] == beta[i][l]) {
                return Err(NetworkError::TrivialReaction(l));
            }
        }
        let internal_energy = internal_energies_from_rates(&alpha, &beta, &k_plus, &k_minus)?;
        let stoich = stoichiometric_matrix(&alpha, &beta);
        let invariant_basis = if m == 0 {
            (0..n)
                .map(|i| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
                .collect()
        } else {
            invariant_basis(&stoich)
        };
        let terms = (0..m)
            .map(|l| ReactionTerms {
                reactants: (0..n)
                    .filter(|&i| alpha[i][l] > 0)
                    .map(|i| (i, alpha[i][l] as i32))
                    .collect(),
                products: (0..n)
                    .filter(|&i| beta[i][l] > 0)
                    .map(|i| (i, beta[i][l] as i32))
                    .collect(),
                net: (0..n)
                    .filter(|&i| stoich[i][l] != 0)
                    .map(|i| (i, stoich[i][l]))
                    .collect(),
            })
            .collect();
        Ok(Self {
            species_names,
            alpha,
            beta,
            k_plus,
            k_minus,
            internal_energy,
            invariant_basis,
            terms,
        })
    }

    pub fn num_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.k_plus.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species_names.iter().position(|s| s == name)
    }

    pub fn alpha(&self) -> &[Vec<u32>] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Vec<u32>] {
        &self.beta
    }

    /// `sigma[i][l] = beta[i][l] - alpha[i][l]`.
    pub fn stoich(&self) -> Vec<Vec<i32>> {
        stoichiometric_matrix(&self.alpha, &self.beta)
    }

    pub fn k_plus(&self) -> &[f64] {
        &self.k_plus
    }

    pub fn k_minus(&self) -> &[f64] {
        &self.k_minus
    }

    pub fn internal_energy(&self) -> &[f64] {
        &self.internal_energy
    }

    pub fn invariant_basis(&self) -> &[Vec<f64>] {
        &self.invariant_basis
    }

    pub(crate) fn terms(&self) -> &[ReactionTerms] {
        &self.terms
    }

    /// Checks length and positivity.
    pub fn concentration(&self, values: Vec<f64>) -> Result<Concentration, NetworkError> {
        if values.len() != self.num_species() {
            return Err(NetworkError::WrongLength {
                expected: self.num_species(),
                got: values.len(),
            });
        }
        Concentration::new(values)
    }

    /// Forward flux `k+ prod c^alpha` of reaction `l`.
    pub(crate) fn forward_flux(&self, l: usize, c: &[f64]) -> f64 {
        self.k_plus[l] * monomial(&self.terms[l].reactants, c)
    }

    /// Backward flux `k- prod c^beta` of reaction `l` (the mobility `eta_l`).
    pub(crate) fn backward_flux(&self, l: usize, c: &[f64]) -> f64 {
        self.k_minus[l] * monomial(&self.terms[l].products, c)
    }

    /// Net mass-action rate of every reaction.
    pub fn mass_action_rate(&self, c: &Concentration) -> Vec<f64> {
        self.rates_of(c.as_slice())
    }

    pub(crate) fn rates_of(&self, c: &[f64]) -> Vec<f64> {
        (0..self.num_reactions())
            .map(|l| self.forward_flux(l, c) - self.backward_flux(l, c))
            .collect()
    }

    pub fn chemical_potential(&self, c: &Concentration) -> Vec<f64> {
        c.as_slice()
            .iter()
            .zip(&self.internal_energy)
            .map(|(ci, u)| ci.ln() + u)
            .collect()
    }

    /// `sigma^T mu` for every reaction.
    pub fn affinity(&self, c: &Concentration) -> Vec<f64> {
        let mu = self.chemical_potential(c);
        self.terms
            .iter()
            .map(|t| t.net.iter().map(|&(i, s)| s as f64 * mu[i]).sum())
            .collect()
    }

    pub fn free_energy_density(&self, c: &Concentration) -> f64 {
        self.free_energy_of(c.as_slice())
    }

    pub(crate) fn free_energy_of(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(&self.internal_energy)
            .map(|(&ci, &u)| ci * (ci.ln() - 1.0) + ci * u)
            .sum()
    }

    /// `e^T c` for every invariant basis vector `e`.
    pub fn invariants_of(&self, c: &[f64]) -> Vec<f64> {
        self.invariant_basis
            .iter()
            .map(|e| e.iter().zip(c).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Worst detailed-balance residual `|ln(k+/k-) + sigma^T U|` over all reactions.
    pub fn detailed_balance_residual(&self) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(l, t)| {
                let su: f64 = t
                    .net
                    .iter()
                    .map(|&(i, s)| s as f64 * self.internal_energy[i])
                    .sum();
                ((self.k_plus[l] / self.k_minus[l]).ln() + su).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn monomial(powers: &[(usize, i32)], c: &[f64]) -> f64 {
    powers.iter().map(|&(i, p)| c[i].powi(p)).product()
}

/// `sigma = beta - alpha`, indexed `[species][reaction]`.
pub fn stoichiometric_matrix(alpha: &[Vec<u32>], beta: &[Vec<u32>]) -> Vec<Vec<i32>> {
    alpha
        .iter()
        .zip(beta)
        .map(|(a, b)| a.iter().zip(b).map(|(&a, &b)| b as i32 - a as i32).collect())
        .collect()
}

/// Solves `sigma^T U = -ln(k+/k-)` in the least-squares sense and returns the
/// minimum-norm solution. Fails if the system is inconsistent, i.e. the rate
/// constants violate the Wegscheider cycle conditions.
pub fn internal_energies_from_rates(
    alpha: &[Vec<u32>],
    beta: &[Vec<u32>],
    k_plus: &[f64],
    k_minus: &[f64],
) -> Result<Vec<f64>, NetworkError> {
    let n = alpha.len();
    let m = k_plus.len();
    for (name, ks) in [("k_plus", k_plus), ("k_minus", k_minus)] {
        if let Some((reaction, &value)) = ks.iter().enumerate().find(|(_, k)| !(**k > 0.0)) {
            return Err(NetworkError::NonPositiveRate {
                name,
                reaction,
                value,
            });
        }
    }
    if m == 0 {
        return Ok(vec![0.0; n]);
    }
    let sigma = stoichiometric_matrix(alpha, beta);
    let st = DMatrix::from_fn(m, n, |l, i| sigma[i][l] as f64);
    let rhs = DVector::from_fn(m, |l, _| -(k_plus[l] / k_minus[l]).ln());
    let svd = st.clone().svd(true, true);
    let u = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| NetworkError::Shape(e.to_string()))?;
    let residual = (&st * &u - &rhs).amax();
    if residual > DETAILED_BALANCE_TOL {
        return Err(NetworkError::NoDetailedBalance { residual });
    }
    Ok(u.iter().copied().collect())
}

/// Basis of `Ker(sigma^T)` (the conserved quantities), one vector per free
/// column of the row-reduced `sigma^T`. Every vector has unit max-norm.
pub fn invariant_basis(sigma: &[Vec<i32>]) -> Vec<Vec<f64>> {
    let n = sigma.len();
    let m = sigma.first().map_or(0, |r| r.len());
    // Row-reduce sigma^T (M x N).
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|l| (0..n).map(|i| sigma[i][l] as f64).collect())
        .collect();
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) = (row..m)
            .map(|r| (r, a[r][col].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= PIVOT_TOL {
            continue;
        }
        a.swap(row, best);
        let p = a[row][col];
        for v in a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = a[row].clone();
        for (r, other) in a.iter_mut().enumerate() {
            let f = other[col];
            if r != row && f != 0.0 {
                for (x, p) in other.iter_mut().zip(&pivot_row) {
                    *x -= f * p;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivot_cols.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut e = vec![0.0; n];
            e[f] = 1.0;
            for (r, &pc) in pivot_cols.iter().enumerate() {
                e[pc] = -a[r][f];
            }
            let scale = e.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
            e.iter_mut().for_each(|v| {
                *v /= scale;
                if v.abs() < PIVOT_TOL {
                    *v = 0.0;
                }
            });
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn isomerization(a: f64) -> ReactionNetwork {
        ReactionNetwork::new(
            names(&["X1", "X2"]),
            vec![vec![1], vec![0]],
            vec![vec![0], vec![1]],
            vec![a],
            vec![1.0],
        )
        .unwrap()
    }

    fn autocatalytic() -> ReactionNetwork {
        ReactionNetwork::new(
            names(&["U", "V"]),
            vec![vec![1], vec![2]],
            vec![vec![0], vec![3]],
            vec![1.0],
            vec![0.1],
        )
        .unwrap()
    }

    pub(crate) fn michaelis_menten() -> ReactionNetwork {
        // E, S, ES, EP, P
        ReactionNetwork::new(
            names(&["E", "S", "ES", "EP", "P"]),
            vec![
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![0, 1, 0],
                vec![0, 0, 1],
                vec![0, 0, 0],
            ],
            vec![
                vec![0, 0, 1],
                vec![0, 0, 0],
                vec![1, 0, 0],
                vec![0, 1, 0],
                vec![0, 0, 1],
            ],
            vec![1.0, 100.0, 100.0],
            vec![0.5, 1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn rates_of_reference_states() {
        let net = isomerization(2.0);
        let r = net.mass_action_rate(&net.concentration(vec![1.0, 2.0]).unwrap());
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-15);

        let net = autocatalytic();
        let r = net.mass_action_rate(&net.concentration(vec![1.0, 1.0]).unwrap());
        assert_abs_diff_eq!(r[0], 0.9, epsilon = 1e-15);

        let net = michaelis_menten();
        let c = net
            .concentration(vec![0.8, 1.0, 0.01, 0.01, 0.01])
            .unwrap();
        let r = net.mass_action_rate(&c);
        assert_abs_diff_eq!(r[0], 0.795, epsilon = 1e-15);
    }

    #[test]
    fn potentials_and_affinity() {
        let net = isomerization(2.0);
        // minimum-norm gauge: U = (ln2/2, -ln2/2)
        let u = net.internal_energy();
        assert_abs_diff_eq!(u[0], 0.5 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], -0.5 * 2f64.ln(), epsilon = 1e-12);

        let c = net.concentration(vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(net.affinity(&c)[0], -2f64.ln(), epsilon = 1e-12);

        // equilibrium c = (1, 2) for k+ = 2, k- = 1
        let eq = net.concentration(vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(net.affinity(&eq)[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chemical_potential_with_unit_gauge() {
        // X1 <=> X2 with k+ = k- gives U = 0.
        let net = isomerization(1.0);
        let c = net.concentration(vec![1.0, 1.0]).unwrap();
        assert_eq!(net.chemical_potential(&c), vec![0.0, 0.0]);
        // mu = ln c + U vanishes at c = exp(-U)
        let net = isomerization(4.0);
        let u = net.internal_energy().to_vec();
        let c = net
            .concentration(u.iter().map(|v| (-v).exp()).collect())
            .unwrap();
        for mu in net.chemical_potential(&c) {
            assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn free_energy_reference_values() {
        let net = ReactionNetwork::new(names(&["A"]), vec![vec![]], vec![vec![]], vec![], vec![])
            .unwrap();
        assert_abs_diff_eq!(
            net.free_energy_density(&Concentration::new(vec![1.0]).unwrap()),
            -1.0
        );
        assert_abs_diff_eq!(
            net.free_energy_density(&Concentration::new(vec![std::f64::consts::E]).unwrap()),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn autocatalytic_energies_match_reference_gauge() {
        let net = autocatalytic();
        let u = net.internal_energy();
        // -U_u - 2U_v + 3U_v = ln(k-/k+)
        assert_abs_diff_eq!(-u[0] + u[1], (0.1f64).ln(), epsilon = 1e-12);
        // the gauge U_u = ln k+, U_v = ln k- differs by a multiple of (1, 1)
        let (gu, gv) = (0.0, 0.1f64.ln());
        assert_abs_diff_eq!(u[0] - gu, u[1] - gv, epsilon = 1e-12);
        assert!(net.detailed_balance_residual() < 1e-12);
    }

    #[test]
    fn triangle_violating_cycle_condition_is_rejected() {
        // A <=> B, B <=> C, C <=> A
        let alpha = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        let beta = vec![vec![0, 0, 1], vec![1, 0, 0], vec![0, 1, 0]];
        let err = internal_energies_from_rates(&alpha, &beta, &[2.0, 1.0, 1.0], &[1.0, 1.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, NetworkError::NoDetailedBalance { .. }));
        // k1+k2+k3+ = k1-k2-k3- is fine
        let u = internal_energies_from_rates(&alpha, &beta, &[2.0, 3.0, 0.5], &[1.0, 1.0, 3.0])
            .unwrap();
        assert_eq!(u.len(), 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let err = ReactionNetwork::new(
            names(&["A", "B"]),
            vec![vec![1], vec![0]],
            vec![vec![0], vec![1]],
            vec![1.0],
            vec![0.0],
        )
        .unwrap_err();
        assert!(matches!(err, NetworkError::NonPositiveRate { .. }));
        let net = isomerization(2.0);
        assert!(matches!(
            net.concentration(vec![1.0, 0.0]),
            Err(NetworkError::NonPositiveConcentration { index: 1, .. })
        ));
        assert!(matches!(
            net.concentration(vec![1.0]),
            Err(NetworkError::WrongLength { .. })
        ));
    }

    fn in_span(basis: &[Vec<f64>], v: &[f64]) -> bool {
        let n = v.len();
        let a = DMatrix::from_fn(n, basis.len(), |i, k| basis[k][i]);
        let b = DVector::from_column_slice(v);
        let x = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
        (&a * x - b).amax() < 1e-10
    }

    #[test]
    fn invariant_bases() {
        let basis = invariant_basis(&[vec![-1], vec![1]]);
        assert_eq!(basis.len(), 1);
        assert_abs_diff_eq!(basis[0][0], basis[0][1]);
        assert_abs_diff_eq!(basis[0][0].abs(), 1.0);

        let net = michaelis_menten();
        let basis = net.invariant_basis();
        assert_eq!(basis.len(), 2);
        assert!(in_span(basis, &[1.0, 0.0, 1.0, 1.0, 0.0]));
        assert!(in_span(basis, &[0.0, 1.0, 1.0, 1.0, 1.0]));
        let sigma = net.stoich();
        for e in basis {
            assert_abs_diff_eq!(e.iter().fold(0.0_f64, |s, v| s.max(v.abs())), 1.0);
            for l in 0..3 {
                let s: f64 = e.iter().zip(&sigma).map(|(ei, row)| ei * row[l] as f64).sum();
                assert!(s.abs() <= 1e-12);
            }
        }
    }
}
