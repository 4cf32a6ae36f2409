//! Classical post-processing that turns a sifted key pair into a shared
//! secret: interactive error reconciliation, multi-photon/intercept leak
//! estimation, and hash-based privacy amplification with exact accounting
//! of every disclosed bit.
//!
//! Reconciliation runs three block-parity stages over freshly shuffled
//! copies of the key (block sizes roughly 0.73/BER, then twice, then four
//! times that), each mismatched block resolved by parity bisection, followed
//! by a random-subset cleanup that terminates after 20 consecutive matching
//! parities. Every parity Alice reveals is one bit of leaked information;
//! the final key is shortened by exactly that count plus every fully
//! disclosed (corrected) bit, so the surviving length is
//! `initial − errors − parities`, floored at zero.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    ClassicalMessage, MessageTransport, TransportError, SEED_CONTEXT_CLEANUP_SUBSET,
    SEED_CONTEXT_STAGE_SHUFFLE,
};

/// Consecutive matching cleanup parities required to declare the keys equal.
/// The chance of a surviving error is at most 2⁻²⁰ per key.
const CLEANUP_CONFIRMATIONS: u32 = 20;

/// Distillation failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistillError {
    #[error("keys differ in length: {alice} vs {bob}")]
    LengthMismatch { alice: usize, bob: usize },
    #[error("cannot reconcile an empty key")]
    EmptyKey,
    #[error("error-rate guess {0} outside (0, 0.5)")]
    BadErrorGuess(f64),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("leak model needs a click probability in (0, 1], got {p_click}")]
    BadClickProbability { p_click: f64 },
    #[error("the plain intercept-resend model has no tagging fraction")]
    NotATaggedModel,
    #[error(
        "no key survives accounting: {n_corrected} corrected bits, \
         {e_bits:.1} leaked bits, safety margin {s}"
    )]
    KeyExhausted { n_corrected: usize, e_bits: f64, s: u32 },
}

/// What one reconciliation stage did to the key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    /// `block-1`, `block-2`, `block-3` or `cleanup`.
    pub stage: String,
    /// Top-level block size for the block stages; 0 for cleanup, whose
    /// subset size shrinks with the key.
    pub block_size: usize,
    pub errors_corrected: usize,
    pub parities_disclosed: usize,
    pub key_len_after: usize,
}

/// One party's key material together with its disclosure bookkeeping.
#[derive(Debug, Clone, Default, Serialize)]
pub struct KeyLedger {
    bits: Vec<bool>,
    disclosed_parities: usize,
    discarded: usize,
    history: Vec<StageRecord>,
}

impl KeyLedger {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Total parity bits revealed over the classical channel so far.
    pub fn disclosed_parities(&self) -> usize {
        self.disclosed_parities
    }

    /// Total bits removed from the key (corrected bits plus the end
    /// truncation that pays for disclosed parities).
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    pub fn history(&self) -> &[StageRecord] {
        &self.history
    }
}

/// Outcome of a complete reconciliation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconcileSummary {
    pub initial_len: usize,
    pub final_len: usize,
    /// Errors located and removed — with overwhelming probability all of
    /// them, so `errors_found / initial_len` measures the channel.
    pub errors_found: usize,
    /// Parity bits disclosed (= `ParityReply` messages sent).
    pub parities_revealed: usize,
    /// `errors_found / initial_len`.
    pub ber_estimate: f64,
}

/// Block sizes for the three reconciliation stages: the first is the
/// efficiency optimum ≈ 0.73/BER (clamped to `[4, n]`), the second and
/// third double and quadruple it (also capped at `n`).
pub fn block_size_schedule(ber_guess: f64, n: usize) -> Result<[usize; 3], DistillError> {
    if n == 0 {
        return Err(DistillError::EmptyKey);
    }
    if !(ber_guess.is_finite() && ber_guess > 0.0 && ber_guess < 0.5) {
        return Err(DistillError::BadErrorGuess(ber_guess));
    }
    let k1 = ((0.73 / ber_guess).round() as usize).max(4).min(n);
    Ok([k1, (2 * k1).min(n), (4 * k1).min(n)])
}

/// Parity (XOR) of the key bits at the given positions.
pub fn parity_over(positions: &[u32], bits: &[bool]) -> bool {
    positions.iter().fold(false, |acc, &p| acc ^ bits[p as usize])
}

/// The half-size index subset one confirmation pass compares parities over.
///
/// Both parties expand the transmitted `seed` into the same subset, so only
/// eight bytes cross the wire per pass. While any discrepancy remains, a
/// uniformly drawn half-subset straddles it with probability 1/2, which is
/// what makes a run of consecutive clean passes strong evidence that the
/// keys agree everywhere.
pub fn confirmation_subset(seed: u64, len: usize) -> Vec<u32> {
    let mut indices: Vec<u32> = (0..len as u32).collect();
    let take = (len / 2).max(1);
    let (subset, _) = indices.partial_shuffle(&mut ChaCha12Rng::seed_from_u64(seed), take);
    subset.to_vec()
}

/// Removes `sorted` (ascending, unique) positions from `bits` in one pass.
fn remove_positions(bits: &mut Vec<bool>, sorted: &[u32]) {
    if sorted.is_empty() {
        return;
    }
    let mut next = sorted.iter().peekable();
    let mut kept = Vec::with_capacity(bits.len() - sorted.len());
    for (i, &bit) in bits.iter().enumerate() {
        if next.peek() == Some(&&(i as u32)) {
            next.next();
        } else {
            kept.push(bit);
        }
    }
    *bits = kept;
}

/// Locates the single differing position within `positions` (an ordered
/// list of key indices whose overall parities disagree) by halving: Bob
/// announces the probe interval, Alice answers with her parity of it, and
/// both sides narrow accordingly. Costs ⌈log₂ len⌉ parity replies.
fn bisect_error(
    positions: &[u32],
    alice_bits: &[bool],
    bob_bits: &[bool],
    transport: &mut impl MessageTransport,
    replies: &mut usize,
) -> Result<u32, TransportError> {
    let mut lo = 0usize;
    let mut hi = positions.len();
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        transport.transmit(false, &ClassicalMessage::parity_query(lo as u32, mid as u32))?;
        let alice_parity = parity_over(&positions[lo..mid], alice_bits);
        transport.transmit(true, &ClassicalMessage::parity_reply(alice_parity))?;
        *replies += 1;
        if alice_parity != parity_over(&positions[lo..mid], bob_bits) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(positions[lo])
}

/// Interactive reconciliation of Bob's key against Alice's.
///
/// Bob drives: he publishes each stage's shuffle seed (so both parties
/// derive the same permutation), Alice answers each scheduled block with her
/// parity, and disagreeing blocks are bisected. Corrected bits are fully
/// disclosed by the bisection, so they are deleted from both keys at the end
/// of the stage (cleanup deletes immediately). After the three block stages,
/// random half-key subsets are compared until 20 in a row agree; any
/// mismatch is bisected, removed, and resets the counter. Finally both keys
/// are truncated by the number of disclosed parities.
///
/// On a transport failure the ledgers are left mid-surgery and must be
/// discarded.
pub fn reconcile(
    alice: &mut KeyLedger,
    bob: &mut KeyLedger,
    transport: &mut impl MessageTransport,
    ber_guess: f64,
    driver_rng: &mut impl Rng,
) -> Result<ReconcileSummary, DistillError> {
    if alice.len() != bob.len() {
        return Err(DistillError::LengthMismatch { alice: alice.len(), bob: bob.len() });
    }
    let initial_len = alice.len();
    if initial_len == 0 {
        return Err(DistillError::EmptyKey);
    }
    let schedule = block_size_schedule(ber_guess, initial_len)?;

    let mut errors_found = 0usize;
    let mut parities_revealed = 0usize;

    for (stage_index, &block_size) in schedule.iter().enumerate() {
        let m = bob.len();
        let mut stage_replies = 0usize;
        let mut found: Vec<u32> = Vec::new();
        if m > 0 {
            let seed: u64 = driver_rng.random();
            transport.transmit(false, &ClassicalMessage::subset_seed(SEED_CONTEXT_STAGE_SHUFFLE, seed))?;
            let mut perm: Vec<u32> = (0..m as u32).collect();
            perm.shuffle(&mut ChaCha12Rng::seed_from_u64(seed));

            for block in perm.chunks(block_size) {
                let alice_parity = parity_over(block, &alice.bits);
                transport.transmit(true, &ClassicalMessage::parity_reply(alice_parity))?;
                stage_replies += 1;
                if alice_parity != parity_over(block, &bob.bits) {
                    found.push(bisect_error(
                        block,
                        &alice.bits,
                        &bob.bits,
                        transport,
                        &mut stage_replies,
                    )?);
                }
            }

            found.sort_unstable();
            remove_positions(&mut alice.bits, &found);
            remove_positions(&mut bob.bits, &found);
        }

        errors_found += found.len();
        parities_revealed += stage_replies;
        let record = StageRecord {
            stage: format!("block-{}", stage_index + 1),
            block_size,
            errors_corrected: found.len(),
            parities_disclosed: stage_replies,
            key_len_after: bob.len(),
        };
        for ledger in [&mut *alice, &mut *bob] {
            ledger.disclosed_parities += stage_replies;
            ledger.discarded += found.len();
            ledger.history.push(record.clone());
        }
    }

    // Cleanup: random-subset confirmation sweep.
    let mut cleanup_replies = 0usize;
    let mut cleanup_errors = 0usize;
    let mut consecutive_matches = 0u32;
    while consecutive_matches < CLEANUP_CONFIRMATIONS && !bob.bits.is_empty() {
        let m = bob.len();
        let seed: u64 = driver_rng.random();
        transport.transmit(false, &ClassicalMessage::subset_seed(SEED_CONTEXT_CLEANUP_SUBSET, seed))?;
        let subset = confirmation_subset(seed, m);

        let alice_parity = parity_over(&subset, &alice.bits);
        transport.transmit(true, &ClassicalMessage::parity_reply(alice_parity))?;
        cleanup_replies += 1;
        if alice_parity == parity_over(&subset, &bob.bits) {
            consecutive_matches += 1;
            continue;
        }
        consecutive_matches = 0;
        let position =
            bisect_error(&subset, &alice.bits, &bob.bits, transport, &mut cleanup_replies)?;
        alice.bits.remove(position as usize);
        bob.bits.remove(position as usize);
        cleanup_errors += 1;
    }
    errors_found += cleanup_errors;
    parities_revealed += cleanup_replies;
    let cleanup_record = StageRecord {
        stage: "cleanup".to_string(),
        block_size: 0,
        errors_corrected: cleanup_errors,
        parities_disclosed: cleanup_replies,
        key_len_after: bob.len(),
    };
    for ledger in [&mut *alice, &mut *bob] {
        ledger.disclosed_parities += cleanup_replies;
        ledger.discarded += cleanup_errors;
        ledger.history.push(cleanup_record.clone());
    }

    transport.transmit(false, &ClassicalMessage::done())?;

    // Pay for the disclosed parities by truncating the end of both keys.
    let final_len = initial_len.saturating_sub(errors_found + parities_revealed);
    for ledger in [&mut *alice, &mut *bob] {
        ledger.discarded += ledger.bits.len() - final_len.min(ledger.bits.len());
        ledger.bits.truncate(final_len);
    }

    Ok(ReconcileSummary {
        initial_len,
        final_len: bob.len(),
        errors_found,
        parities_revealed,
        ber_estimate: errors_found as f64 / initial_len as f64,
    })
}

// ---------------------------------------------------------------------------
// Leak estimation
// ---------------------------------------------------------------------------

/// How much of the corrected key the eavesdropper is assumed to know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum LeakModel {
    /// Naive intercept-resend bound: fraction 2·BER + μ.
    #[serde(rename = "bb84")]
    Bb84Simple,
    /// Every multi-photon pulse (n ≥ 2) is tagged as fully known.
    #[serde(rename = "tagged-multi")]
    TaggedMulti,
    /// Only two-photon pulses are tagged (beamsplitting attacks need a
    /// spare photon; n ≥ 3 is negligible at the operating μ).
    #[serde(rename = "tagged-2ph")]
    TaggedTwoPhoton,
    /// Two-photon tagging with hidden bases: without basis announcements a
    /// stored photon yields only half a bit, so the tagged term is halved.
    #[serde(rename = "tagged-2ph-hidden")]
    TaggedTwoPhotonHidden,
}

impl std::str::FromStr for LeakModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bb84" => Ok(Self::Bb84Simple),
            "tagged-multi" => Ok(Self::TaggedMulti),
            "tagged-2ph" => Ok(Self::TaggedTwoPhoton),
            "tagged-2ph-hidden" => Ok(Self::TaggedTwoPhotonHidden),
            other => Err(format!(
                "unknown leak model `{other}` (expected bb84, tagged-multi, tagged-2ph or tagged-2ph-hidden)"
            )),
        }
    }
}

impl std::fmt::Display for LeakModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bb84Simple => "bb84",
            Self::TaggedMulti => "tagged-multi",
            Self::TaggedTwoPhoton => "tagged-2ph",
            Self::TaggedTwoPhotonHidden => "tagged-2ph-hidden",
        })
    }
}

/// Estimated eavesdropper knowledge, in bits, about the sifted key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakEstimate {
    pub model: LeakModel,
    pub e_bits: f64,
}

/// P[n ≥ 2] for a Poisson source: 1 − e^(−μ) − μe^(−μ).
pub fn multi_photon_probability(mu: f64) -> f64 {
    1.0 - (-mu).exp() - mu * (-mu).exp()
}

/// P[n = 2] for a Poisson source: (μ²/2)·e^(−μ).
pub fn two_photon_probability(mu: f64) -> f64 {
    0.5 * mu * mu * (-mu).exp()
}

/// Naive leak bound: the eavesdropper knows fraction `2·BER + μ` of the
/// sifted key (intercept-resend on everything that caused an error, plus
/// one whole bit per mean photon of multi-photon exposure), capped at 1.
pub fn leak_bb84(n_sift: usize, ber: f64, mu: f64) -> LeakEstimate {
    let fraction = (2.0 * ber + mu).min(1.0);
    LeakEstimate { model: LeakModel::Bb84Simple, e_bits: n_sift as f64 * fraction }
}

/// Tagged-pulse leak bound.
///
/// A fraction β = p_tag / p_click of the *detected* slots originated in a
/// tagged pulse and is charged as known (weight ½ instead of 1 when the
/// bases stay hidden); the untagged remainder is charged the
/// intercept-resend cost 2·BER. The total fraction is clamped to [0, 1] —
/// β itself may exceed 1 when nearly every click is tagged.
pub fn leak_tagged(
    n_sift: usize,
    ber: f64,
    mu: f64,
    p_click: f64,
    model: LeakModel,
) -> Result<LeakEstimate, DistillError> {
    let (p_tag, weight) = match model {
        LeakModel::Bb84Simple => return Err(DistillError::NotATaggedModel),
        LeakModel::TaggedMulti => (multi_photon_probability(mu), 1.0),
        LeakModel::TaggedTwoPhoton => (two_photon_probability(mu), 1.0),
        LeakModel::TaggedTwoPhotonHidden => (two_photon_probability(mu), 0.5),
    };
    if !(p_click.is_finite() && p_click > 0.0 && p_click <= 1.0) {
        return Err(DistillError::BadClickProbability { p_click });
    }
    let beta = p_tag / p_click;
    let fraction = (weight * beta + 2.0 * ber * (1.0 - beta)).clamp(0.0, 1.0);
    Ok(LeakEstimate { model, e_bits: n_sift as f64 * fraction })
}

// ---------------------------------------------------------------------------
// Privacy amplification
// ---------------------------------------------------------------------------

/// Privacy-amplification settings: the safety margin `s` (extra bits
/// sacrificed beyond the leak estimate) and the seed of the public random
/// hash matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PAParams {
    pub s: u32,
    pub subset_seed: u64,
}

/// Upper bound on the eavesdropper's expected information about the final
/// key: 2^(−s)/ln 2 bits.
pub fn eve_information_bound(s: u32) -> f64 {
    (-(f64::from(s))).exp2() / std::f64::consts::LN_2
}

/// Compresses the corrected key with a seeded random binary matrix
/// (a universal₂ hash family): output bit `j` is the parity of a random
/// subset of the input, drawn from stream `j` of the seeded generator.
///
/// The output length is `⌊len − e_bits − s⌋`; if no bit would survive, the
/// session must be aborted and [`DistillError::KeyExhausted`] says so.
pub fn privacy_amplify(
    ledger: &KeyLedger,
    leak: &LeakEstimate,
    pa: &PAParams,
) -> Result<Vec<bool>, DistillError> {
    let n_corrected = ledger.len();
    let surviving = n_corrected as f64 - leak.e_bits - f64::from(pa.s);
    if surviving < 1.0 {
        return Err(DistillError::KeyExhausted {
            n_corrected,
            e_bits: leak.e_bits,
            s: pa.s,
        });
    }
    let n_final = surviving.floor() as usize;

    // Pack the key once; each output bit then costs one word-wise AND pass.
    let n_words = n_corrected.div_ceil(64);
    let mut key_words = vec![0u64; n_words];
    for (i, &bit) in ledger.bits().iter().enumerate() {
        if bit {
            key_words[i / 64] |= 1 << (i % 64);
        }
    }

    let mut output = Vec::with_capacity(n_final);
    for j in 0..n_final {
        let mut row = ChaCha12Rng::seed_from_u64(pa.subset_seed);
        row.set_stream(j as u64);
        // Unused high bits of the last key word are zero, so the row's
        // surplus random bits cannot contribute.
        let mut acc = 0u64;
        for &word in &key_words {
            acc ^= word & row.random::<u64>();
        }
        output.push(acc.count_ones() % 2 == 1);
    }
    Ok(output)
}
