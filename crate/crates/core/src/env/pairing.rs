//! Sequential UAV/GU pairing with exclusive claims.

use super::channel::distance;
use super::EnvError;

/// One UAV's pairing request: which GUs it wants and how much it wants each.
///
/// `logits` order the claims when capacity is short and pick the forced GU
/// when a UAV ends up with nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingIntent {
    pub claims: Vec<bool>,
    pub logits: Vec<f64>,
}

impl PairingIntent {
    /// Claims every GU with a positive logit (probability above one half).
    pub fn from_logits(logits: Vec<f64>) -> Self {
        Self {
            claims: logits.iter().map(|&l| l > 0.0).collect(),
            logits,
        }
    }

    pub fn from_claims(claims: Vec<bool>, logits: Vec<f64>) -> Self {
        Self { claims, logits }
    }

    /// Claims the listed GUs (0-based) with unit logits, everything else -1.
    pub fn claiming(n: usize, gus: &[usize]) -> Self {
        let logits = (0..n)
            .map(|i| if gus.contains(&i) { 1.0 } else { -1.0 })
            .collect();
        Self::from_logits(logits)
    }
}

/// Binary `M x N` pairing matrix with each GU in exactly one row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairingAssignment {
    matrix: Vec<Vec<bool>>,
    served_counts: Vec<usize>,
}

impl PairingAssignment {
    pub fn from_owner(num_uavs: usize, owner: &[usize]) -> Result<Self, EnvError> {
        let mut matrix = vec![vec![false; owner.len()]; num_uavs];
        for (n, &m) in owner.iter().enumerate() {
            if m >= num_uavs {
                return Err(EnvError::Usage(format!("GU {n} assigned to missing UAV {m}")));
            }
            matrix[m][n] = true;
        }
        let a = Self::from_matrix(matrix);
        a.check()?;
        Ok(a)
    }

    fn from_matrix(matrix: Vec<Vec<bool>>) -> Self {
        let served_counts = matrix.iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
        Self { matrix, served_counts }
    }

    pub fn num_uavs(&self) -> usize {
        self.matrix.len()
    }

    pub fn num_gus(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    pub fn is_paired(&self, m: usize, n: usize) -> bool {
        self.matrix[m][n]
    }

    pub fn row(&self, m: usize) -> &[bool] {
        &self.matrix[m]
    }

    pub fn served_count(&self, m: usize) -> usize {
        self.served_counts[m]
    }

    pub fn served_counts(&self) -> &[usize] {
        &self.served_counts
    }

    /// Serving UAV of GU `n`.
    pub fn owner(&self, n: usize) -> usize {
        (0..self.num_uavs())
            .find(|&m| self.matrix[m][n])
            .expect("every GU has an owner")
    }

    pub fn served_gus(&self, m: usize) -> Vec<usize> {
        (0..self.num_gus()).filter(|&n| self.matrix[m][n]).collect()
    }

    /// Row-major 0/1 flattening.
    pub fn flattened(&self) -> Vec<f64> {
        self.matrix
            .iter()
            .flat_map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }))
            .collect()
    }

    /// Column sums exactly 1, row sums at least 1, counts consistent.
    pub fn check(&self) -> Result<(), EnvError> {
        for n in 0..self.num_gus() {
            let col: usize = self.matrix.iter().filter(|r| r[n]).count();
            if col != 1 {
                return Err(EnvError::Invariant(format!("GU {n} paired with {col} UAVs")));
            }
        }
        for (m, row) in self.matrix.iter().enumerate() {
            let s = row.iter().filter(|&&b| b).count();
            if s == 0 {
                return Err(EnvError::Invariant(format!("UAV {m} serves no GU")));
            }
            if s != self.served_counts[m] {
                return Err(EnvError::Invariant(format!("UAV {m} served count stale")));
            }
        }
        Ok(())
    }
}

fn best_available(logits: &[f64], available: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (n, &free) in available.iter().enumerate() {
        if free && best.is_none_or(|b| logits[n] > logits[b]) {
            best = Some(n);
        }
    }
    best
}

/// Resolves per-UAV intents into an exclusive assignment.
///
/// UAVs claim in `uav_order`; claimed GUs are masked for later UAVs. A UAV
/// keeps at most as many claims as leave one free GU for each UAV still to
/// act (lowest logits dropped first). A UAV left with nothing takes its
/// highest-logit free GU. Leftover GUs go to the nearest UAV, ties to the
/// lower UAV index.
pub fn resolve_pairing(
    intents: &[PairingIntent],
    uav_order: &[usize],
    uav_positions: &[[f64; 3]],
    gu_positions: &[[f64; 3]],
) -> Result<PairingAssignment, EnvError> {
    let m_count = uav_positions.len();
    let n_count = gu_positions.len();
    if intents.len() != m_count {
        return Err(EnvError::Usage(format!(
            "{} intents for {} UAVs",
            intents.len(),
            m_count
        )));
    }
    if n_count < m_count {
        return Err(EnvError::Usage("fewer GUs than UAVs".into()));
    }
    let mut seen = vec![false; m_count];
    if uav_order.len() != m_count || uav_order.iter().any(|&m| m >= m_count || std::mem::replace(&mut seen[m], true)) {
        return Err(EnvError::Usage(format!("{uav_order:?} is not a permutation of 0..{m_count}")));
    }
    for it in intents {
        if it.claims.len() != n_count || it.logits.len() != n_count {
            return Err(EnvError::Usage("intent length differs from GU count".into()));
        }
    }

    let mut owner: Vec<Option<usize>> = vec![None; n_count];
    let mut available = vec![true; n_count];
    for (pos, &m) in uav_order.iter().enumerate() {
        let intent = &intents[m];
        let remaining_after = m_count - pos - 1;
        let free = available.iter().filter(|&&a| a).count();
        let cap = free - remaining_after;
        let mut wanted: Vec<usize> = (0..n_count)
            .filter(|&n| available[n] && intent.claims[n])
            .collect();
        // stable sort keeps lower GU index first among equal logits
        wanted.sort_by(|&a, &b| intent.logits[b].total_cmp(&intent.logits[a]));
        wanted.truncate(cap);
        if wanted.is_empty() {
            let forced = best_available(&intent.logits, &available).expect("a free GU is reserved");
            wanted.push(forced);
        }
        for n in wanted {
            owner[n] = Some(m);
            available[n] = false;
        }
    }

    let owner: Vec<usize> = owner
        .iter()
        .enumerate()
        .map(|(n, o)| {
            o.unwrap_or_else(|| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (m, &p) in uav_positions.iter().enumerate() {
                    let d = distance(p, gu_positions[n]);
                    if d < best_d {
                        best_d = d;
                        best = m;
                    }
                }
                best
            })
        })
        .collect();
    PairingAssignment::from_owner(m_count, &owner)
}
