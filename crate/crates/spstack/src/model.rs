//! The spatially-temporally varying coefficient GLM: candidate models,
//! auxiliary-vector sampling, and the structured projection that turns one
//! auxiliary draw into one exact posterior draw.
//!
//! A posterior draw is `gamma = (H1'H1 + I)^{-1} (H1' v_eta + v_gamma)`
//! with `H1 = [I : X : Xt]`. Because `Xt'Xt + I` is block-diagonal in
//! location-major order (r x r blocks) and the remaining Schur complement
//! collapses to diagonals plus one p x p system, the projection costs
//! `O(n r^3 + p^3)` instead of a dense solve in `n + p + nr` unknowns.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::chol::{cholesky, cholesky_with_jitter, spd_solve, tri_solve_in_place, Side};
use crate::error::{Error, Result};
use crate::expfam::{dy_sample, DyParams, Family, FamilySpec, PsiKind};
use crate::kernel::{corr_matrix, KernelParams, SpaceTimeCoord};

/// Observed data: coordinates, responses, and the two design roles.
///
/// `xtilde_cols` names the columns of `x` whose coefficients vary over
/// space and time; the fixed-effect design is all of `x`.
#[derive(Debug, Clone)]
pub struct Dataset {
    coords: Vec<SpaceTimeCoord>,
    y: Vec<u64>,
    family: FamilySpec,
    x: DMatrix<f64>,
    xtilde_cols: Vec<usize>,
}

impl Dataset {
    pub fn new(
        coords: Vec<SpaceTimeCoord>,
        y: Vec<u64>,
        family: FamilySpec,
        x: DMatrix<f64>,
        xtilde_cols: Vec<usize>,
    ) -> Result<Self> {
        let n = coords.len();
        if y.len() != n || family.len() != n || x.nrows() != n {
            return Err(Error::Data(format!(
                "inconsistent lengths: {} coords, {} responses, {} trials, {} design rows",
                n,
                y.len(),
                family.len(),
                x.nrows()
            )));
        }
        if let Some(c) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Data(format!("non-finite coordinate at row {c}")));
        }
        let p = x.ncols();
        if xtilde_cols.is_empty() {
            return Err(Error::Data("at least one varying coefficient is required".into()));
        }
        if let Some(&bad) = xtilde_cols.iter().find(|&&c| c >= p) {
            return Err(Error::Data(format!(
                "varying-coefficient column {bad} out of range for {p} predictors"
            )));
        }
        if n < p + 1 {
            return Err(Error::Data(format!(
                "need at least p + 1 = {} observations, got {n}",
                p + 1
            )));
        }
        if family.kind() == Family::Binomial {
            if let Some(i) = (0..n).find(|&i| y[i] > family.trials()[i]) {
                return Err(Error::Data(format!(
                    "response {} exceeds {} trials at row {i}",
                    y[i],
                    family.trials()[i]
                )));
            }
        }
        Ok(Self {
            coords,
            y,
            family,
            x,
            xtilde_cols,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.xtilde_cols.len()
    }

    pub fn coords(&self) -> &[SpaceTimeCoord] {
        &self.coords
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn family(&self) -> &FamilySpec {
        &self.family
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn xtilde_cols(&self) -> &[usize] {
        &self.xtilde_cols
    }

    /// Materialize the n x r varying-coefficient design.
    pub fn xtilde(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.r(), |i, j| self.x[(i, self.xtilde_cols[j])])
    }

    /// Rows of the dataset in the given order (used for fold splits).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let coords = indices.iter().map(|&i| self.coords[i]).collect();
        let y = indices.iter().map(|&i| self.y[i]).collect();
        let family = self.family.subset(indices);
        let x = DMatrix::from_fn(indices.len(), self.p(), |i, j| self.x[(indices[i], j)]);
        Dataset::new(coords, y, family, x, self.xtilde_cols.clone())
    }
}

/// One candidate model: the fixed tuple that makes exact sampling possible.
///
/// The kernel is shared across all varying-coefficient processes (the
/// reduced parameterization); `kappa_eps` is derived from the family.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CandidateModel {
    pub alpha_eps: f64,
    pub kappa_eps: f64,
    pub sigma_xi: f64,
    pub kernel: KernelParams,
}

impl CandidateModel {
    pub fn new(alpha_eps: f64, sigma_xi: f64, kernel: KernelParams, family: Family) -> Result<Self> {
        if alpha_eps <= 0.0 || !alpha_eps.is_finite() {
            return Err(Error::Parameter(format!(
                "boundary adjustment must be positive, got {alpha_eps}"
            )));
        }
        if sigma_xi <= 0.0 || !sigma_xi.is_finite() {
            return Err(Error::Parameter(format!(
                "noise scale must be positive, got {sigma_xi}"
            )));
        }
        let kappa_eps = match family {
            Family::Poisson => 0.0,
            Family::Binomial => 2.0 * alpha_eps,
        };
        Ok(Self {
            alpha_eps,
            kappa_eps,
            sigma_xi,
            kernel,
        })
    }
}

/// Degrees of freedom of the inverse-gamma priors on the variance scales.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    nu_beta: f64,
    nu_z: Vec<f64>,
}

impl Hyperparams {
    pub fn new(nu_beta: f64, nu_z: Vec<f64>) -> Result<Self> {
        if nu_beta <= 0.0 || nu_z.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter(
                "degrees of freedom must be positive".into(),
            ));
        }
        Ok(Self { nu_beta, nu_z })
    }

    /// The default used throughout: all degrees of freedom at 3.
    pub fn default_for(r: usize) -> Self {
        Self {
            nu_beta: 3.0,
            nu_z: vec![3.0; r],
        }
    }

    pub fn nu_beta(&self) -> f64 {
        self.nu_beta
    }

    pub fn nu_z(&self) -> &[f64] {
        &self.nu_z
    }
}

/// One joint posterior draw.
///
/// `z` is n x r with column j holding process j at the observed
/// coordinates; `eta` is the natural-parameter draw retained for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    pub xi: DVector<f64>,
    pub beta: DVector<f64>,
    pub z: DMatrix<f64>,
    pub sigma2_beta: f64,
    pub sigma2_z: Vec<f64>,
    pub eta: DVector<f64>,
}

/// The auxiliary vector feeding one projection.
#[derive(Debug, Clone)]
pub struct AuxDraw {
    pub v_eta: DVector<f64>,
    pub v_xi: DVector<f64>,
    pub v_beta: DVector<f64>,
    /// n x r, column j drawn from the marginal prior of process j.
    pub v_z: DMatrix<f64>,
    pub sigma2_beta: f64,
    pub sigma2_z: Vec<f64>,
}

/// Inverse-gamma draw with shape and scale both `nu / 2`.
fn inv_gamma_half(nu: f64, rng: &mut impl Rng) -> f64 {
    let g = Gamma::new(nu / 2.0, 1.0).expect("valid gamma shape");
    (nu / 2.0) / g.sample(rng)
}

/// Draw the auxiliary vector for one posterior sample.
///
/// The natural-parameter component is the conjugate posterior of each
/// observation's natural parameter; the remaining components are prior
/// draws with variance scales integrated compositionally (an explicit
/// inverse-gamma draw followed by a Gaussian), so the marginals are
/// multivariate t.
pub fn draw_aux_vector(
    data: &Dataset,
    model: &CandidateModel,
    hyper: &Hyperparams,
    r_factor: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<AuxDraw> {
    let n = data.n();
    let p = data.p();
    let r = data.r();
    if hyper.nu_z.len() != r {
        return Err(Error::Parameter(format!(
            "{} process degrees of freedom supplied for {r} processes",
            hyper.nu_z.len()
        )));
    }

    let psi = match data.family().kind() {
        Family::Poisson => PsiKind::LogGamma,
        Family::Binomial => PsiKind::LogitBeta,
    };
    let mut v_eta = DVector::zeros(n);
    for i in 0..n {
        let alpha = data.y[i] as f64 + model.alpha_eps;
        let kappa = data.family.trials()[i] as f64 + model.kappa_eps;
        let params = DyParams::new(alpha, kappa, psi).map_err(|e| {
            Error::Parameter(format!("observation {i}: {e}"))
        })?;
        v_eta[i] = dy_sample(&params, rng);
    }

    let mut v_xi = DVector::zeros(n);
    for i in 0..n {
        let e: f64 = StandardNormal.sample(rng);
        v_xi[i] = model.sigma_xi * e;
    }

    let sigma2_beta = inv_gamma_half(hyper.nu_beta, rng);
    let sd_beta = sigma2_beta.sqrt();
    let mut v_beta = DVector::zeros(p);
    for i in 0..p {
        let e: f64 = StandardNormal.sample(rng);
        v_beta[i] = sd_beta * e;
    }

    let mut sigma2_z = Vec::with_capacity(r);
    let mut v_z = DMatrix::zeros(n, r);
    let mut eps = vec![0.0f64; n];
    for j in 0..r {
        let s2 = inv_gamma_half(hyper.nu_z[j], rng);
        sigma2_z.push(s2);
        let sd = s2.sqrt();
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(rng);
        }
        // Correlated draw through the stored factor: cov(U' e) = R.
        let f = r_factor.as_slice();
        for (i, out) in v_z.column_mut(j).iter_mut().enumerate() {
            let ci = i * n;
            let mut acc = 0.0;
            for k in 0..=i {
                acc += f[ci + k] * eps[k];
            }
            *out = sd * acc;
        }
    }

    Ok(AuxDraw {
        v_eta,
        v_xi,
        v_beta,
        v_z,
        sigma2_beta,
        sigma2_z,
    })
}

/// Per-dataset factors reused by every projection.
///
/// All of them depend only on the designs, so one context serves every
/// draw of every candidate model on the same data.
#[derive(Debug, Clone)]
pub struct ProjectionContext {
    x: DMatrix<f64>,
    xt: DMatrix<f64>,
    /// Squared row norms of the varying design.
    u2: Vec<f64>,
    /// Upper factors of the r x r blocks `xt_i xt_i' + I`.
    d_blocks: Vec<DMatrix<f64>>,
    /// Upper factor of the p x p Schur complement
    /// `I + X' diag(1 / (2 + u2)) X`.
    d_star: DMatrix<f64>,
}

impl ProjectionContext {
    pub fn new(x: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        let r = xt.ncols();
        assert_eq!(n, xt.nrows(), "design row counts must agree");

        let mut u2 = Vec::with_capacity(n);
        let mut d_blocks = Vec::with_capacity(n);
        for i in 0..n {
            let xi = xt.row(i).transpose();
            u2.push(xi.norm_squared());
            let mut block = &xi * xi.transpose();
            for d in 0..r {
                block[(d, d)] += 1.0;
            }
            d_blocks.push(cholesky(&block)?);
        }

        let mut schur = DMatrix::<f64>::identity(p, p);
        for i in 0..n {
            let w = 1.0 / (2.0 + u2[i]);
            let row = x.row(i);
            for a in 0..p {
                for b in 0..p {
                    schur[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let d_star = cholesky(&schur)?;

        Ok(Self {
            x: x.clone(),
            xt: xt.clone(),
            u2,
            d_blocks,
            d_star,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.xt.ncols()
    }
}

/// Reshape n x r (column per process) into the location-major stacked
/// vector `(z_(1)', ..., z_(n)')'` with `z_(i) = (z_1(l_i), ..., z_r(l_i))`.
pub fn to_location_major(z: &DMatrix<f64>) -> DVector<f64> {
    let (n, r) = (z.nrows(), z.ncols());
    let mut v = DVector::zeros(n * r);
    for i in 0..n {
        for j in 0..r {
            v[i * r + j] = z[(i, j)];
        }
    }
    v
}

/// Inverse of [`to_location_major`].
pub fn from_location_major(v: &DVector<f64>, n: usize, r: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, r);
    for i in 0..n {
        for j in 0..r {
            z[(i, j)] = v[i * r + j];
        }
    }
    z
}

/// Structured projection of one auxiliary draw onto the posterior.
///
/// Output is `(xi, beta, z)` with `z` in the public n x r layout. Exactly
/// equal (to round-off) to the dense normal-equations solution computed by
/// [`project_naive`].
pub fn project(
    ctx: &ProjectionContext,
    v_eta: &DVector<f64>,
    v_xi: &DVector<f64>,
    v_beta: &DVector<f64>,
    v_z: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = ctx.n();
    let p = ctx.p();
    let r = ctx.r();
    assert_eq!(v_eta.len(), n);
    assert_eq!(v_xi.len(), n);
    assert_eq!(v_beta.len(), p);
    assert_eq!(v_z.nrows(), n);
    assert_eq!(v_z.ncols(), r);

    // Block solve v4 = (Xt'Xt + I)^{-1} (Xt' v_eta + v_z), location-major.
    let mut v4 = vec![0.0f64; n * r];
    let mut block = vec![0.0f64; r];
    for i in 0..n {
        for j in 0..r {
            block[j] = ctx.xt[(i, j)] * v_eta[i] + v_z[(i, j)];
        }
        let d = &ctx.d_blocks[i];
        tri_solve_in_place(d, &mut block, Side::UpperTranspose)?;
        tri_solve_in_place(d, &mut block, Side::Upper)?;
        v4[i * r..(i + 1) * r].copy_from_slice(&block);
    }

    // t = v_eta - Xt v4 rowwise; then the two Schur right-hand sides.
    let mut t = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..r {
            acc += ctx.xt[(i, j)] * v4[i * r + j];
        }
        t[i] = v_eta[i] - acc;
    }
    let v52 = ctx.x.tr_mul(&t) + v_beta;
    let v51 = &t + v_xi;

    // b = S_D*^{-1} (X' diag(1/(2+u2)) v51 - v52) = -beta.
    let mut weighted = DVector::zeros(n);
    for i in 0..n {
        weighted[i] = v51[i] / (2.0 + ctx.u2[i]);
    }
    let mut b = ctx.x.tr_mul(&weighted) - v52;
    tri_solve_in_place(&ctx.d_star, b.as_mut_slice(), Side::UpperTranspose)?;
    tri_solve_in_place(&ctx.d_star, b.as_mut_slice(), Side::Upper)?;

    // xi from the two diagonal Schur pieces.
    let xb = &ctx.x * &b;
    let mut xi = DVector::zeros(n);
    for i in 0..n {
        let u = ctx.u2[i];
        xi[i] = (1.0 + u) / (2.0 + u) * v51[i] + xb[i] / (2.0 + u);
    }
    let beta = -b;

    // z_(i) = v4_i - (xt_i xt_i' + I)^{-1} xt_i (xi + X beta)_i.
    let g = &xi + &ctx.x * &beta;
    let mut z = DMatrix::zeros(n, r);
    for i in 0..n {
        for j in 0..r {
            block[j] = ctx.xt[(i, j)] * g[i];
        }
        let d = &ctx.d_blocks[i];
        tri_solve_in_place(d, &mut block, Side::UpperTranspose)?;
        tri_solve_in_place(d, &mut block, Side::Upper)?;
        for j in 0..r {
            z[(i, j)] = v4[i * r + j] - block[j];
        }
    }

    Ok((xi, beta, z))
}

/// Dense reference projection forming `H1'H1 + I` explicitly.
///
/// Mathematically identical to [`project`]; cubic in `n + p + nr`, so it
/// serves as a correctness oracle and is only suitable for small problems.
pub fn project_naive(
    x: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    v_eta: &DVector<f64>,
    v_xi: &DVector<f64>,
    v_beta: &DVector<f64>,
    v_z: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let p = x.ncols();
    let r = xt.ncols();
    let dim = n + p + n * r;

    // H1 = [I : X : Xt-block] with the varying design in process-major
    // column blocks diag(xt_j).
    let mut h1 = DMatrix::<f64>::zeros(n, dim);
    for i in 0..n {
        h1[(i, i)] = 1.0;
    }
    for j in 0..p {
        for i in 0..n {
            h1[(i, n + j)] = x[(i, j)];
        }
    }
    for j in 0..r {
        for i in 0..n {
            h1[(i, n + p + j * n + i)] = xt[(i, j)];
        }
    }

    let mut m = h1.tr_mul(&h1);
    for d in 0..dim {
        m[(d, d)] += 1.0;
    }
    let mut rhs = h1.tr_mul(v_eta);
    for i in 0..n {
        rhs[i] += v_xi[i];
    }
    for j in 0..p {
        rhs[n + j] += v_beta[j];
    }
    for j in 0..r {
        for i in 0..n {
            rhs[n + p + j * n + i] += v_z[(i, j)];
        }
    }

    let factor = cholesky(&m)?;
    let gamma = spd_solve(&factor, &rhs)?;

    let xi = DVector::from_fn(n, |i, _| gamma[i]);
    let beta = DVector::from_fn(p, |j, _| gamma[n + j]);
    let z = DMatrix::from_fn(n, r, |i, j| gamma[n + p + j * n + i]);
    Ok((xi, beta, z))
}

/// Shared pieces for repeatedly sampling one candidate model on one
/// dataset: the correlation factor and the projection context.
pub struct ModelSampler<'a> {
    data: &'a Dataset,
    model: &'a CandidateModel,
    hyper: &'a Hyperparams,
    r_factor: &'a DMatrix<f64>,
    proj: &'a ProjectionContext,
}

impl<'a> ModelSampler<'a> {
    pub fn new(
        data: &'a Dataset,
        model: &'a CandidateModel,
        hyper: &'a Hyperparams,
        r_factor: &'a DMatrix<f64>,
        proj: &'a ProjectionContext,
    ) -> Self {
        Self {
            data,
            model,
            hyper,
            r_factor,
            proj,
        }
    }

    /// One exact posterior draw.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<PosteriorDraw> {
        let aux = draw_aux_vector(self.data, self.model, self.hyper, self.r_factor, rng)?;
        let (xi, beta, z) = project(self.proj, &aux.v_eta, &aux.v_xi, &aux.v_beta, &aux.v_z)?;
        Ok(PosteriorDraw {
            xi,
            beta,
            z,
            sigma2_beta: aux.sigma2_beta,
            sigma2_z: aux.sigma2_z,
            eta: aux.v_eta,
        })
    }

    pub fn sample(&self, n_draws: usize, rng: &mut impl Rng) -> Result<Vec<PosteriorDraw>> {
        (0..n_draws).map(|_| self.draw(rng)).collect()
    }
}

/// Draw `n_draws` independent exact posterior samples of one candidate
/// model, building the correlation factor and projection context in place.
pub fn posterior_sample(
    data: &Dataset,
    model: &CandidateModel,
    hyper: &Hyperparams,
    n_draws: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PosteriorDraw>> {
    if n_draws == 0 {
        return Err(Error::Config("draw count must be at least 1".into()));
    }
    let r_mat = corr_matrix(data.coords(), &model.kernel)?;
    let (factor, _jittered) = cholesky_with_jitter(&r_mat)?;
    let proj = ProjectionContext::new(data.x(), &data.xtilde())?;
    ModelSampler::new(data, model, hyper, &factor, &proj).sample(n_draws, rng)
}
