//! The BB84 session protocol: per-slot basis/bit choices and their phase
//! encodings, detector-click decoding, sifting, the classical message
//! vocabulary with its wire format, and the orchestration of a full
//! pulse-exchange session.
//!
//! Information is carried by the differential phase `Δφ` of a pulse pair.
//! A *basis* is a parity class of `Δφ/(π/2)` — `Odd` or `Even` — and each
//! (basis, bit) pair maps to one modulator phase:
//!
//! | basis, bit | Alice φ_A | | basis | Bob φ_B |
//! |------------|-----------|-|-------|---------|
//! | odd, 0     | −π/2      | | odd   | −π/2    |
//! | even, 1    | 0         | | even  | 0       |
//! | odd, 1     | π/2       | |       |         |
//! | even, 0    | π         | |       |         |
//!
//! When the bases match, the photon routes deterministically (odd basis:
//! bit 0 → `D0`, bit 1 → `D1`; even basis: bit 1 → `D0`, bit 0 → `D1`);
//! mismatched bases leave `Δφ` at an odd multiple of π/4 and the outcome is
//! an even coin flip, so sifting keeps only matching-basis single clicks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

use crate::optics::{differential_phase, PhaseSettings};

/// Protocol-level failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    /// Only a single-detector click can be decoded into a bit.
    #[error("cannot decode a {0:?} outcome into a bit")]
    NotASingleClick(Click),
    /// Unknown message kind tag on the wire.
    #[error("unknown message kind tag {0}")]
    UnknownMessageKind(u8),
    /// A wire buffer or payload ended before its declared length.
    #[error("message truncated: needed {needed} bytes, got {got}")]
    TruncatedMessage { needed: usize, got: usize },
}

/// The two encoding bases: odd or even multiples of π/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Odd,
    Even,
}

/// Alice's per-slot choice. The modulator phase is fully determined by
/// (basis, bit) — see [`alice_phase`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AliceChoice {
    pub basis: Basis,
    pub bit: bool,
}

impl AliceChoice {
    /// The phase Alice's modulator applies for this choice.
    pub fn phase(&self) -> f64 {
        alice_phase(self.basis, self.bit)
    }
}

/// Bob's per-slot choice: a basis only — see [`bob_phase`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BobChoice {
    pub basis: Basis,
}

impl BobChoice {
    /// The phase Bob's modulator applies to the returning pulse.
    pub fn phase(&self) -> f64 {
        bob_phase(self.basis)
    }
}

/// Alice's modulator phase for a (basis, bit) choice:
/// (odd, 0) → −π/2, (even, 1) → 0, (odd, 1) → π/2, (even, 0) → π.
pub fn alice_phase(basis: Basis, bit: bool) -> f64 {
    match (basis, bit) {
        (Basis::Odd, false) => -FRAC_PI_2,
        (Basis::Even, true) => 0.0,
        (Basis::Odd, true) => FRAC_PI_2,
        (Basis::Even, false) => PI,
    }
}

/// Bob's modulator phase for a basis choice: odd → −π/2, even → 0.
///
/// Bob modulates only pulses *returning* to his station; pulses on their way
/// out see his modulator switched off.
pub fn bob_phase(basis: Basis) -> f64 {
    match basis {
        Basis::Odd => -FRAC_PI_2,
        Basis::Even => 0.0,
    }
}

/// What the detector pair registered in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Click {
    None,
    D0,
    D1,
    Both,
}

/// Detection record for one pulse slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotOutcome {
    pub slot_index: u32,
    pub click: Click,
}

/// Decodes a single-detector click under a matched basis back into Alice's
/// bit: odd basis — `D0` → 0, `D1` → 1; even basis — `D0` → 1, `D1` → 0.
/// `None`/`Both` outcomes carry no bit and are rejected.
pub fn decode_click(basis: Basis, click: Click) -> Result<bool, ProtocolError> {
    match (basis, click) {
        (Basis::Odd, Click::D0) => Ok(false),
        (Basis::Odd, Click::D1) => Ok(true),
        (Basis::Even, Click::D0) => Ok(true),
        (Basis::Even, Click::D1) => Ok(false),
        (_, other) => Err(ProtocolError::NotASingleClick(other)),
    }
}

/// The outcome of sifting: both raw keys plus the slot index each key bit
/// came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiftResult {
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    pub sift_indices: Vec<u32>,
}

/// Keeps the slots where exactly one detector clicked *and* the bases
/// matched; Alice contributes her chosen bit, Bob decodes his click.
/// Double clicks are discarded. Panics if the two slot lists differ in
/// length (they describe the same session).
pub fn sift(alice: &[AliceChoice], bob: &[(BobChoice, SlotOutcome)]) -> SiftResult {
    assert_eq!(alice.len(), bob.len(), "slot lists must describe the same session");
    let mut result = SiftResult::default();
    for (a, (b, outcome)) in alice.iter().zip(bob) {
        if a.basis != b.basis {
            continue;
        }
        match outcome.click {
            Click::D0 | Click::D1 => {
                let bob_bit = decode_click(b.basis, outcome.click)
                    .expect("single clicks always decode");
                result.alice_key.push(a.bit);
                result.bob_key.push(bob_bit);
                result.sift_indices.push(outcome.slot_index);
            }
            Click::None | Click::Both => {}
        }
    }
    result
}

// ---------------------------------------------------------------------------
// Classical messages and their wire format
// ---------------------------------------------------------------------------

/// Kinds of classical protocol messages. The discriminants are the 1-byte
/// wire tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    BasisList = 0,
    ParityQuery = 1,
    ParityReply = 2,
    SubsetSeed = 3,
    Done = 4,
}

impl MessageKind {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self, ProtocolError> {
        match tag {
            0 => Ok(Self::BasisList),
            1 => Ok(Self::ParityQuery),
            2 => Ok(Self::ParityReply),
            3 => Ok(Self::SubsetSeed),
            4 => Ok(Self::Done),
            other => Err(ProtocolError::UnknownMessageKind(other)),
        }
    }
}

/// One classical message: a kind plus an opaque payload. The channel is
/// assumed reliable, ordered and authenticated; there is no retransmission
/// or integrity layer here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub kind: MessageKind,
    pub payload: Vec<u8>,
}

/// Seed-bearing messages carry a context byte telling the receiver what the
/// seed drives.
pub const SEED_CONTEXT_STAGE_SHUFFLE: u8 = 0;
pub const SEED_CONTEXT_CLEANUP_SUBSET: u8 = 1;

impl ClassicalMessage {
    /// A packed basis announcement, 1 bit per slot (odd = 1), slot 0 in the
    /// most significant bit of byte 0.
    pub fn basis_list(bases: &[Basis]) -> Self {
        let bits: Vec<bool> = bases.iter().map(|b| *b == Basis::Odd).collect();
        Self { kind: MessageKind::BasisList, payload: pack_bits(&bits) }
    }

    /// Recovers `n_slots` bases from a basis-list payload.
    pub fn parse_basis_list(&self, n_slots: usize) -> Result<Vec<Basis>, ProtocolError> {
        let bits = unpack_bits(&self.payload, n_slots)?;
        Ok(bits
            .into_iter()
            .map(|b| if b { Basis::Odd } else { Basis::Even })
            .collect())
    }

    /// Asks for the parity of positions `lo..hi` of the currently agreed
    /// position list (big-endian `u32` pair).
    pub fn parity_query(lo: u32, hi: u32) -> Self {
        let mut payload = Vec::with_capacity(8);
        payload.extend_from_slice(&lo.to_be_bytes());
        payload.extend_from_slice(&hi.to_be_bytes());
        Self { kind: MessageKind::ParityQuery, payload }
    }

    pub fn parse_parity_query(&self) -> Result<(u32, u32), ProtocolError> {
        if self.payload.len() < 8 {
            return Err(ProtocolError::TruncatedMessage { needed: 8, got: self.payload.len() });
        }
        let lo = u32::from_be_bytes(self.payload[0..4].try_into().expect("4 bytes"));
        let hi = u32::from_be_bytes(self.payload[4..8].try_into().expect("4 bytes"));
        Ok((lo, hi))
    }

    /// Answers a parity query with a single bit.
    pub fn parity_reply(parity: bool) -> Self {
        Self { kind: MessageKind::ParityReply, payload: vec![u8::from(parity)] }
    }

    pub fn parse_parity_reply(&self) -> Result<bool, ProtocolError> {
        match self.payload.first() {
            Some(&b) => Ok(b != 0),
            None => Err(ProtocolError::TruncatedMessage { needed: 1, got: 0 }),
        }
    }

    /// Publishes a seed from which both parties derive the same shuffle
    /// permutation or random subset (context byte + big-endian `u64`).
    pub fn subset_seed(context: u8, seed: u64) -> Self {
        let mut payload = Vec::with_capacity(9);
        payload.push(context);
        payload.extend_from_slice(&seed.to_be_bytes());
        Self { kind: MessageKind::SubsetSeed, payload }
    }

    pub fn parse_subset_seed(&self) -> Result<(u8, u64), ProtocolError> {
        if self.payload.len() < 9 {
            return Err(ProtocolError::TruncatedMessage { needed: 9, got: self.payload.len() });
        }
        let seed = u64::from_be_bytes(self.payload[1..9].try_into().expect("8 bytes"));
        Ok((self.payload[0], seed))
    }

    pub fn done() -> Self {
        Self { kind: MessageKind::Done, payload: Vec::new() }
    }

    /// Serializes to the wire format: 1-byte kind tag, 4-byte big-endian
    /// payload length, payload bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one message from the front of `buf`, returning it along with
    /// the number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize), ProtocolError> {
        if buf.len() < 5 {
            return Err(ProtocolError::TruncatedMessage { needed: 5, got: buf.len() });
        }
        let kind = MessageKind::from_tag(buf[0])?;
        let len = u32::from_be_bytes(buf[1..5].try_into().expect("4 bytes")) as usize;
        let total = 5 + len;
        if buf.len() < total {
            return Err(ProtocolError::TruncatedMessage { needed: total, got: buf.len() });
        }
        Ok((Self { kind, payload: buf[5..total].to_vec() }, total))
    }
}

/// Packs bits into bytes, bit `i` landing in byte `i / 8` with bit 0 in the
/// most significant position of byte 0.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

/// Inverse of [`pack_bits`] for a known bit count.
pub fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<bool>, ProtocolError> {
    let needed = n.div_ceil(8);
    if bytes.len() < needed {
        return Err(ProtocolError::TruncatedMessage { needed, got: bytes.len() });
    }
    Ok((0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

/// The classical channel failed (e.g. the peer disappeared); `delivered`
/// counts the messages that made it through first.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("classical channel failed after {delivered} delivered messages")]
pub struct TransportError {
    pub delivered: usize,
}

/// One delivered message, tagged with its direction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoggedMessage {
    pub from_alice: bool,
    pub message: ClassicalMessage,
}

/// A reliable, ordered, in-process duplex message channel. Every public
/// disclosure of the protocol flows through one of these, so a transport
/// doubles as the session's classical transcript. [`ClassicalMessage`]'s
/// wire encoding allows an implementation to carry the same protocol
/// between two OS processes.
pub trait MessageTransport {
    /// Delivers one message (`from_alice` gives the direction).
    fn transmit(&mut self, from_alice: bool, message: &ClassicalMessage) -> Result<(), TransportError>;
}

/// Transport that stores every message in order.
#[derive(Debug, Default, Clone)]
pub struct RecordingTransport {
    pub log: Vec<LoggedMessage>,
}

impl RecordingTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of logged messages of the given kind.
    pub fn count(&self, kind: MessageKind) -> usize {
        self.log.iter().filter(|m| m.message.kind == kind).count()
    }
}

impl MessageTransport for RecordingTransport {
    fn transmit(&mut self, from_alice: bool, message: &ClassicalMessage) -> Result<(), TransportError> {
        self.log.push(LoggedMessage { from_alice, message: message.clone() });
        Ok(())
    }
}

/// Transport that only counts messages per kind — used where the full log
/// would dominate memory (exhaustive reconciliation tests).
#[derive(Debug, Default, Clone)]
pub struct CountingTransport {
    counts: [usize; 5],
}

impl CountingTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.counts[kind.tag() as usize]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

impl MessageTransport for CountingTransport {
    fn transmit(&mut self, _from_alice: bool, message: &ClassicalMessage) -> Result<(), TransportError> {
        self.counts[message.kind.tag() as usize] += 1;
        Ok(())
    }
}

/// Transport that delivers a fixed number of messages and then fails —
/// for exercising abort paths.
#[derive(Debug, Clone)]
pub struct FlakyTransport {
    budget: usize,
    delivered: usize,
}

impl FlakyTransport {
    pub fn failing_after(budget: usize) -> Self {
        Self { budget, delivered: 0 }
    }
}

impl MessageTransport for FlakyTransport {
    fn transmit(&mut self, _from_alice: bool, _message: &ClassicalMessage) -> Result<(), TransportError> {
        if self.delivered >= self.budget {
            return Err(TransportError { delivered: self.delivered });
        }
        self.delivered += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Choice streams and session orchestration
// ---------------------------------------------------------------------------

/// A seeded stream of per-slot protocol choices.
///
/// In the ordinary protocol each party draws basis and bit from its own
/// private stream. In hidden-basis operation the *bases* come instead from a
/// stream both parties pre-share, so their bases agree on every slot and are
/// never announced; bits stay private. (The key material consumed by
/// pre-sharing that seed is not accounted against the key rate here.)
#[derive(Debug, Clone)]
pub struct ChoiceSource {
    rng: ChaCha12Rng,
    shared_basis_rng: Option<ChaCha12Rng>,
}

impl ChoiceSource {
    /// Fully private stream (ordinary, basis-announcing protocol).
    pub fn seeded(seed: u64) -> Self {
        Self { rng: ChaCha12Rng::seed_from_u64(seed), shared_basis_rng: None }
    }

    /// Private bit stream plus a shared basis stream: both parties must be
    /// built with the same `shared_seed`.
    pub fn with_shared_bases(private_seed: u64, shared_seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(private_seed),
            shared_basis_rng: Some(ChaCha12Rng::seed_from_u64(shared_seed)),
        }
    }

    fn next_basis(&mut self) -> Basis {
        let rng = match self.shared_basis_rng.as_mut() {
            Some(shared) => shared,
            None => &mut self.rng,
        };
        if rng.random_bool(0.5) {
            Basis::Odd
        } else {
            Basis::Even
        }
    }

    pub fn next_alice(&mut self) -> AliceChoice {
        let basis = self.next_basis();
        AliceChoice { basis, bit: self.rng.random_bool(0.5) }
    }

    pub fn next_bob(&mut self) -> BobChoice {
        BobChoice { basis: self.next_basis() }
    }
}

/// One quantum-channel use: Alice and Bob's phase settings have been reduced
/// to the differential phase, and the channel answers with what the
/// detectors registered. Implemented by the pulse-level Monte Carlo channel
/// and by deterministic stand-ins in tests.
pub trait SlotChannel {
    fn transmit_slot(&mut self, dphi: f64) -> Click;
}

/// Complete record of one session: both parties' choices, every slot
/// outcome, the classical messages exchanged, and the sifted keys.
///
/// Slot indices are carried explicitly in `outcomes`, so no separate
/// "which slots clicked" announcement is needed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionTranscript {
    pub alice_choices: Vec<AliceChoice>,
    pub bob_choices: Vec<BobChoice>,
    pub outcomes: Vec<SlotOutcome>,
    pub messages: Vec<LoggedMessage>,
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    pub sift_indices: Vec<u32>,
    /// Whether bases were derived from a pre-shared seed (no announcements).
    pub hidden_basis: bool,
    /// False if the classical channel failed; the transcript is then partial
    /// and the keys are empty.
    pub valid: bool,
}

/// Runs a full pulse-exchange session: `n_slots` channel uses followed by
/// basis announcement (one `BasisList` each way — skipped entirely in
/// hidden-basis mode, where both sources must share a basis seed) and local
/// sifting.
///
/// A transport failure aborts the announcement and returns the partial
/// transcript with `valid == false`.
pub fn run_session(
    alice: &mut ChoiceSource,
    bob: &mut ChoiceSource,
    channel: &mut impl SlotChannel,
    transport: &mut impl MessageTransport,
    n_slots: usize,
    hidden_basis: bool,
) -> SessionTranscript {
    let mut transcript = SessionTranscript {
        alice_choices: Vec::with_capacity(n_slots),
        bob_choices: Vec::with_capacity(n_slots),
        outcomes: Vec::with_capacity(n_slots),
        hidden_basis,
        valid: true,
        ..SessionTranscript::default()
    };

    for slot in 0..n_slots {
        let a = alice.next_alice();
        let b = bob.next_bob();
        let settings = PhaseSettings::from_alice_bob(a.phase(), b.phase());
        let click = channel.transmit_slot(differential_phase(&settings));
        transcript.alice_choices.push(a);
        transcript.bob_choices.push(b);
        transcript.outcomes.push(SlotOutcome { slot_index: slot as u32, click });
    }

    if !hidden_basis {
        let bob_bases: Vec<Basis> = transcript.bob_choices.iter().map(|c| c.basis).collect();
        let alice_bases: Vec<Basis> = transcript.alice_choices.iter().map(|c| c.basis).collect();
        for (from_alice, bases) in [(false, bob_bases), (true, alice_bases)] {
            let message = ClassicalMessage::basis_list(&bases);
            if transport.transmit(from_alice, &message).is_err() {
                transcript.valid = false;
                return transcript;
            }
            transcript.messages.push(LoggedMessage { from_alice, message });
        }
    }

    let bob_slots: Vec<(BobChoice, SlotOutcome)> = transcript
        .bob_choices
        .iter()
        .copied()
        .zip(transcript.outcomes.iter().copied())
        .collect();
    let sifted = sift(&transcript.alice_choices, &bob_slots);
    transcript.alice_key = sifted.alice_key;
    transcript.bob_key = sifted.bob_key;
    transcript.sift_indices = sifted.sift_indices;
    transcript
}
