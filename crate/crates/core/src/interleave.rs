//! Team-draft interleaving with a position-biased purchase model.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::QuerySession;
use crate::error::{Error, Result};
use crate::metrics::{ranking_order, DEFAULT_K};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Team {
    A,
    B,
}

/// Result of one draft: item indices and the team that placed each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterleavedList {
    pub items: Vec<usize>,
    pub teams: Vec<Team>,
}

fn check_same_items(rank_a: &[usize], rank_b: &[usize]) -> Result<()> {
    let mut a = rank_a.to_vec();
    let mut b = rank_b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let dup = a.windows(2).any(|w| w[0] == w[1]);
    if a != b || dup {
        return Err(Error::Data(format!(
            "rankings must be permutations of the same items (lengths {} and {})",
            rank_a.len(),
            rank_b.len()
        )));
    }
    Ok(())
}

/// Team-draft interleaving of two rankings of the same items, stopping at
/// `k` items.
///
/// The team with fewer placed items drafts next; when both have placed the
/// same number a fair coin decides. With `mirror`, every coin outcome is
/// inverted, so drafting `(b, a)` with a mirrored coin reproduces the list of
/// `(a, b)` with teams swapped.
pub fn team_draft_with<R: RngCore>(
    rank_a: &[usize],
    rank_b: &[usize],
    k: usize,
    coin: &mut R,
    mirror: bool,
) -> Result<InterleavedList> {
    check_same_items(rank_a, rank_b)?;
    let n = rank_a.len().min(k);
    let max_item = rank_a.iter().copied().max().map_or(0, |m| m + 1);
    let mut placed = vec![false; max_item];
    let (mut next_a, mut next_b) = (0, 0);
    let (mut count_a, mut count_b) = (0usize, 0usize);
    let mut out = InterleavedList {
        items: Vec::with_capacity(n),
        teams: Vec::with_capacity(n),
    };
    while out.items.len() < n {
        let a_turn = count_a < count_b || (count_a == count_b && (coin.random_bool(0.5) != mirror));
        let (ranking, cursor, team) = if a_turn {
            count_a += 1;
            (rank_a, &mut next_a, Team::A)
        } else {
            count_b += 1;
            (rank_b, &mut next_b, Team::B)
        };
        while placed[ranking[*cursor]] {
            *cursor += 1;
        }
        let item = ranking[*cursor];
        placed[item] = true;
        out.items.push(item);
        out.teams.push(team);
    }
    Ok(out)
}

/// [`team_draft_with`] using a coin seeded by `coin_seed`.
pub fn team_draft(rank_a: &[usize], rank_b: &[usize], k: usize, coin_seed: u64) -> Result<InterleavedList> {
    team_draft_with(rank_a, rank_b, k, &mut ChaCha8Rng::seed_from_u64(coin_seed), false)
}

/// Examination probability per position; positions past the end are never
/// examined.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserModel {
    examination: Vec<f64>,
}

impl UserModel {
    pub fn new(examination: Vec<f64>) -> Result<Self> {
        if examination.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Config(format!(
                "examination probabilities must lie in (0, 1]: {examination:?}"
            )));
        }
        if examination.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("examination probabilities must be non-increasing".into()));
        }
        Ok(Self { examination })
    }

    /// `1 / log2(position + 1)` for positions `1..=k`, the NDCG discount.
    pub fn log_discount(k: usize) -> Self {
        Self {
            examination: (0..k).map(|i| 1.0 / libm::log2(i as f64 + 2.0)).collect(),
        }
    }

    pub fn examination(&self, position: usize) -> f64 {
        self.examination.get(position).copied().unwrap_or(0.0)
    }

    pub fn positions(&self) -> usize {
        self.examination.len()
    }
}

impl Default for UserModel {
    fn default() -> Self {
        Self::log_discount(DEFAULT_K)
    }
}

/// Draws a purchase at each position independently with probability
/// `examination(position) · relevance(item)`.
pub fn simulate_session_with<R: RngCore>(
    list: &InterleavedList,
    user: &UserModel,
    relevance: &[f64],
    rng: &mut R,
) -> Result<Vec<bool>> {
    list.items
        .iter()
        .enumerate()
        .map(|(pos, &item)| {
            let r = *relevance
                .get(item)
                .ok_or_else(|| Error::Data(format!("no relevance for item {item}")))?;
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Data(format!("relevance {r} outside [0, 1]")));
            }
            let p = user.examination(pos) * r;
            // always draw, so streams stay aligned across probabilities
            let u: f64 = rng.random();
            Ok(u < p)
        })
        .collect()
}

pub fn simulate_session(list: &InterleavedList, user: &UserModel, relevance: &[f64], seed: u64) -> Result<Vec<bool>> {
    simulate_session_with(list, user, relevance, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Two-sided exact binomial sign test of `wins_a` against `wins_b` under
/// p = 1/2. Returns 1 when there are no decided queries.
pub fn sign_test_p(wins_a: u64, wins_b: u64) -> f64 {
    let n = wins_a + wins_b;
    let m = wins_a.min(wins_b);
    if n == 0 || 2 * m == n {
        return 1.0;
    }
    let tail = if n <= 1000 {
        // C(n, i) stays below 2^1000 and 0.5^n is exact
        let mut c = 1.0f64;
        let mut sum = 0.0;
        for i in 0..=m {
            if i > 0 {
                c = c * (n - i + 1) as f64 / i as f64;
            }
            sum += c;
        }
        sum * libm::pow(0.5, n as f64)
    } else {
        let ln_half_n = n as f64 * libm::log(0.5);
        let ln_fact = |x: u64| libm::lgamma(x as f64 + 1.0);
        let terms: Vec<f64> = (0..=m)
            .map(|i| ln_fact(n) - ln_fact(i) - ln_fact(n - i) + ln_half_n)
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        libm::exp(top) * terms.iter().map(|t| libm::exp(t - top)).sum::<f64>()
    };
    (2.0 * tail).min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterleaveSettings {
    pub impressions: usize,
    /// Page size.
    pub k: usize,
    pub seed: u64,
    /// Invert every draft coin; see [`team_draft_with`].
    pub mirror: bool,
}

impl Default for InterleaveSettings {
    fn default() -> Self {
        Self {
            impressions: 10_000,
            k: DEFAULT_K,
            seed: 0,
            mirror: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterleaveReport {
    pub credit_a: f64,
    pub credit_b: f64,
    /// `(credit_a − credit_b) / (credit_a + credit_b)`; absent when no
    /// purchase happened.
    pub credit_gain: Option<f64>,
    pub p_value: f64,
    pub wins_a: u64,
    pub wins_b: u64,
    /// Impressions with a winner; ties are excluded.
    pub queries_used: u64,
    pub impressions: u64,
}

impl InterleaveReport {
    pub fn inconclusive(&self) -> bool {
        self.credit_gain.is_none()
    }
}

/// SplitMix64 finaliser; gives each impression an independent seed.
pub fn impression_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `settings.impressions` simulated impressions. Each picks a session
/// uniformly, interleaves the two rankers' orderings of it, draws purchases
/// and credits every purchase to the team that placed the item.
///
/// Rankers return one score per item; `relevance` returns per-item purchase
/// probabilities in `[0, 1]`.
pub fn run_interleaving<A, B, R>(
    sessions: &[QuerySession],
    ranker_a: A,
    ranker_b: B,
    relevance: R,
    user: &UserModel,
    settings: &InterleaveSettings,
) -> Result<InterleaveReport>
where
    A: Fn(&QuerySession) -> Result<Vec<f64>>,
    B: Fn(&QuerySession) -> Result<Vec<f64>>,
    R: Fn(&QuerySession) -> Vec<f64>,
{
    if sessions.is_empty() {
        return Err(Error::Data("no sessions to interleave".into()));
    }
    if settings.k == 0 {
        return Err(Error::Config("page size k must be positive".into()));
    }
    let mut prepared = Vec::with_capacity(sessions.len());
    for s in sessions {
        let ra = ranking_order(&ranker_a(s)?)?;
        let rb = ranking_order(&ranker_b(s)?)?;
        if ra.len() != s.len() || rb.len() != s.len() {
            return Err(Error::Data(format!(
                "ranker returned the wrong number of scores for {}",
                s.query_id
            )));
        }
        prepared.push((ra, rb, relevance(s)));
    }
    let (mut credit_a, mut credit_b) = (0u64, 0u64);
    let (mut wins_a, mut wins_b) = (0u64, 0u64);
    for i in 0..settings.impressions {
        let mut rng = ChaCha8Rng::seed_from_u64(impression_seed(settings.seed, i as u64));
        let (ra, rb, rel) = &prepared[rng.random_range(0..prepared.len())];
        let list = team_draft_with(ra, rb, settings.k, &mut rng, settings.mirror)?;
        let bought = simulate_session_with(&list, user, rel, &mut rng)?;
        let (mut a, mut b) = (0u64, 0u64);
        for (team, &hit) in list.teams.iter().zip(&bought) {
            if hit {
                match team {
                    Team::A => a += 1,
                    Team::B => b += 1,
                }
            }
        }
        credit_a += a;
        credit_b += b;
        match a.cmp(&b) {
            core::cmp::Ordering::Greater => wins_a += 1,
            core::cmp::Ordering::Less => wins_b += 1,
            core::cmp::Ordering::Equal => {}
        }
    }
    let total = credit_a + credit_b;
    Ok(InterleaveReport {
        credit_a: credit_a as f64,
        credit_b: credit_b as f64,
        credit_gain: (total > 0).then(|| (credit_a as f64 - credit_b as f64) / total as f64),
        p_value: sign_test_p(wins_a, wins_b),
        wins_a,
        wins_b,
        queries_used: wins_a + wins_b,
        impressions: settings.impressions as u64,
    })
}
