//! C ABI for the hexcommand simulator.
//!
//! Games and policies are opaque handles created by `hc_*_new` and released
//! with the matching `hc_*_free`. Every fallible call returns an [`HcStatus`];
//! on failure `hc_last_error_message` describes the most recent error on the
//! calling thread. Strings returned by the library are released with
//! `hc_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hexcommand::behaviors::BehaviorModel;
use hexcommand::cli::resolve_policy;
use hexcommand::engine::{run_episode, Action, Faction, GameState, Scenario, NUM_ACTIONS};
use hexcommand::observation::LocalEncoder;
use hexcommand::Error;

/// Number of nominal actions; action indices run from 0 to `HC_NUM_ACTIONS - 1`.
pub const HC_NUM_ACTIONS: u32 = 13;

const _: () = assert!(HC_NUM_ACTIONS as usize == NUM_ACTIONS);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Scenario = 3,
    IllegalAction = 4,
    GameOver = 5,
    ModelFault = 6,
    Format = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HcFaction {
    Blue = 0,
    Red = 1,
}

impl From<HcFaction> for Faction {
    fn from(f: HcFaction) -> Faction {
        match f {
            HcFaction::Blue => Faction::Blue,
            HcFaction::Red => Faction::Red,
        }
    }
}

/// A game in progress.
pub struct HcGame {
    state: GameState,
}

/// A behavior model bound to one faction.
pub struct HcPolicy {
    model: Box<dyn BehaviorModel>,
    faction: Faction,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(HcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        let status = match &e {
            Error::InvalidArgument(_) | Error::Shape { .. } => HcStatus::InvalidArgument,
            Error::Scenario(_) => HcStatus::Scenario,
            Error::IllegalAction { .. } => HcStatus::IllegalAction,
            Error::ModelFault { .. } => HcStatus::ModelFault,
            Error::Format(_) | Error::Json(_) | Error::Io(_) => HcStatus::Format,
            _ => HcStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

fn fail(status: HcStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HcStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(HcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(HcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(HcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn game_ref<'a>(g: *const HcGame) -> Result<&'a HcGame, Fail> {
    g.as_ref().ok_or_else(|| fail(HcStatus::NullPointer, "game is null"))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s).map(CString::into_raw).map_err(|_| fail(HcStatus::Internal, "string contains a NUL byte"))
}

fn action(index: u32) -> Result<Action, Fail> {
    Action::from_index(index as usize)
        .ok_or_else(|| fail(HcStatus::InvalidArgument, format!("action index {index} out of range")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message on this thread, or NULL if there is none.
/// Release with `hc_string_free`.
#[no_mangle]
pub extern "C" fn hc_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a game from a scenario JSON document.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `out_game` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_new(scenario_json: *const c_char, seed: u64, out_game: *mut *mut HcGame) -> HcStatus {
    guard(|| {
        let out = out_arg(out_game, "out_game")?;
        *out = ptr::null_mut();
        let scenario = Scenario::from_json(str_arg(scenario_json, "scenario_json")?)?;
        *out = Box::into_raw(Box::new(HcGame { state: GameState::new(&scenario, seed) }));
        Ok(())
    })
}

/// # Safety
/// `game` must be NULL or a handle from `hc_game_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_game_free(game: *mut HcGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Unit that must act next. Returns `GameOver` once the episode has ended.
///
/// # Safety
/// `game` must be a live handle; `out_unit` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_unit_on_move(game: *const HcGame, out_unit: *mut u32) -> HcStatus {
    guard(|| {
        let g = game_ref(game)?;
        let out = out_arg(out_unit, "out_unit")?;
        *out = g.state.unit_on_move().ok_or_else(|| fail(HcStatus::GameOver, "the game is over"))?;
        Ok(())
    })
}

/// Legal actions of `unit` as a bit mask: bit `i` is set when action index `i` is legal.
///
/// # Safety
/// `game` must be a live handle; `out_mask` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_legal_actions(game: *const HcGame, unit: u32, out_mask: *mut u32) -> HcStatus {
    guard(|| {
        let g = game_ref(game)?;
        let out = out_arg(out_mask, "out_mask")?;
        *out = g.state.legal_actions(unit)?.iter().fold(0u32, |m, a| m | (1 << a.index()));
        Ok(())
    })
}

/// Applies one action. The blue-positive reward is written to `out_reward` if it is not NULL.
/// The game is left unchanged on failure.
///
/// # Safety
/// `game` must be a live handle; `out_reward` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_step(
    game: *mut HcGame,
    unit: u32,
    action_index: u32,
    out_reward: *mut i64,
) -> HcStatus {
    guard(|| {
        let g = game.as_mut().ok_or_else(|| fail(HcStatus::NullPointer, "game is null"))?;
        if g.state.is_terminal() {
            return Err(fail(HcStatus::GameOver, "the game is over"));
        }
        let (next, outcome) = g.state.step(unit, action(action_index)?)?;
        g.state = next;
        if let Some(r) = out_reward.as_mut() {
            *r = outcome.reward;
        }
        Ok(())
    })
}

/// Cumulative blue-positive score.
///
/// # Safety
/// `game` must be a live handle; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_score(game: *const HcGame, out_score: *mut i64) -> HcStatus {
    guard(|| {
        *out_arg(out_score, "out_score")? = game_ref(game)?.state.score;
        Ok(())
    })
}

/// Whether the episode has ended.
///
/// # Safety
/// `game` must be a live handle; `out_terminal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_is_terminal(game: *const HcGame, out_terminal: *mut bool) -> HcStatus {
    guard(|| {
        *out_arg(out_terminal, "out_terminal")? = game_ref(game)?.state.is_terminal();
        Ok(())
    })
}

/// Dynamic state (turn, phase, score, units) as JSON. Release with `hc_string_free`.
///
/// # Safety
/// `game` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_state_json(game: *const HcGame, out_json: *mut *mut c_char) -> HcStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        *out = ptr::null_mut();
        let text = serde_json::to_string(&game_ref(game)?.state.snapshot()).map_err(Error::from)?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Length of the local observation vector for window radius `radius`.
///
/// # Safety
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_observation_len(radius: u32, horizon: u32, out_len: *mut usize) -> HcStatus {
    guard(|| {
        *out_arg(out_len, "out_len")? = LocalEncoder::new(radius, horizon)?.len();
        Ok(())
    })
}

/// Local observation of `unit`. `out_written` receives the required length; if
/// `capacity` is smaller nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `game` must be a live handle; `buf` must hold `capacity` doubles (may be NULL
/// when `capacity` is 0); `out_written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_game_encode_local(
    game: *const HcGame,
    unit: u32,
    radius: u32,
    horizon: u32,
    buf: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> HcStatus {
    guard(|| {
        let g = game_ref(game)?;
        let written = out_arg(out_written, "out_written")?;
        let obs = LocalEncoder::new(radius, horizon)?.encode(&g.state, unit, None)?;
        *written = obs.values.len();
        if capacity < obs.values.len() {
            return Err(fail(HcStatus::BufferTooSmall, format!("need {} values, got {capacity}", obs.values.len())));
        }
        if buf.is_null() {
            return Err(fail(HcStatus::NullPointer, "buf is null"));
        }
        ptr::copy_nonoverlapping(obs.values.as_ptr(), buf, obs.values.len());
        Ok(())
    })
}

/// Creates a policy from a spec: a scripted name (`pass`, `random`, `greedy`,
/// `hold`, `goal`), `hierarchy`, or a model or manifest file path.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out_policy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_policy_new(
    spec: *const c_char,
    faction: HcFaction,
    seed: u64,
    out_policy: *mut *mut HcPolicy,
) -> HcStatus {
    guard(|| {
        let out = out_arg(out_policy, "out_policy")?;
        *out = ptr::null_mut();
        let spec = str_arg(spec, "spec")?;
        let faction = Faction::from(faction);
        let mut model =
            resolve_policy(spec, faction, seed).map_err(|e| fail(HcStatus::InvalidArgument, format!("{e:#}")))?;
        model.begin_episode(seed);
        *out = Box::into_raw(Box::new(HcPolicy { model, faction }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be NULL or a handle from `hc_policy_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_policy_free(policy: *mut HcPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Chooses an action index for `unit`, which must belong to the policy's faction.
///
/// # Safety
/// `policy` and `game` must be live handles; `out_action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_policy_act(
    policy: *mut HcPolicy,
    game: *const HcGame,
    unit: u32,
    out_action: *mut u32,
) -> HcStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| fail(HcStatus::NullPointer, "policy is null"))?;
        let g = game_ref(game)?;
        let out = out_arg(out_action, "out_action")?;
        match g.state.unit(unit) {
            Some(u) if u.faction == p.faction => {}
            Some(_) => {
                return Err(fail(HcStatus::InvalidArgument, format!("unit {unit} is not controlled by {}", p.faction)))
            }
            None => return Err(fail(HcStatus::InvalidArgument, format!("unit {unit} does not exist or is destroyed"))),
        }
        let a = p.model.act(&g.state, unit)?;
        p.model.take_trace();
        *out = a.index() as u32;
        Ok(())
    })
}

/// Plays one episode between two policies. The final score goes to
/// `out_final_score`; if `out_log` is not NULL it receives the NDJSON episode
/// log, released with `hc_string_free`.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `blue` and `red` must be
/// live, distinct handles; `out_final_score` must be writable; `out_log` must be
/// NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_run_episode(
    scenario_json: *const c_char,
    blue: *mut HcPolicy,
    red: *mut HcPolicy,
    seed: u64,
    out_final_score: *mut i64,
    out_log: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        let score = out_arg(out_final_score, "out_final_score")?;
        if let Some(l) = out_log.as_mut() {
            *l = ptr::null_mut();
        }
        if blue == red {
            return Err(fail(HcStatus::InvalidArgument, "blue and red must be different policies"));
        }
        let b = blue.as_mut().ok_or_else(|| fail(HcStatus::NullPointer, "blue is null"))?;
        let r = red.as_mut().ok_or_else(|| fail(HcStatus::NullPointer, "red is null"))?;
        if b.faction != Faction::Blue || r.faction != Faction::Red {
            return Err(fail(HcStatus::InvalidArgument, "policies are bound to the wrong factions"));
        }
        let scenario = Scenario::from_json(str_arg(scenario_json, "scenario_json")?)?;
        let log = run_episode(&scenario, b.model.as_mut(), r.model.as_mut(), seed)?;
        *score = log.final_score;
        if let Some(l) = out_log.as_mut() {
            *l = into_c_string(log.to_ndjson())?;
        }
        Ok(())
    })
}
