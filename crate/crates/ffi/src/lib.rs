//! C interface to the simulator and the future-index arithmetic.
//!
//! Every fallible function returns an [`LcrStatus`]. On failure a message
//! describing the error can be read with [`lcr_last_error_message`] on the
//! same thread. Simulations are opaque handles created by
//! [`lcr_simulation_new`] and released with [`lcr_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lcr_core::cli::execute;
use lcr_core::log::{
    allocate_future_index, owner_of, reallocate_index, AllocError, Generation, LogIndex, ServerId,
    Window, WindowState,
};
use lcr_core::scenario::Scenario;
use lcr_core::sim::{SimConfig, Simulation};
use lcr_core::workload::verify_trace_text;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    SimulationFailed = 4,
    /// The handle was already finished and can only be freed.
    Finished = 5,
    NoOpenWindow = 6,
    InvalidArgument = 7,
    /// No live node is leader at the moment.
    NoLeader = 8,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: LcrStatus, msg: impl Into<String>) -> LcrStatus {
    set_error(msg);
    status
}

/// Run `f`, turning a panic into [`LcrStatus::Panic`].
fn guard(f: impl FnOnce() -> LcrStatus) -> LcrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(LcrStatus::Panic, msg)
        }
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lcr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Figures from a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LcrRunSummary {
    pub tps: f64,
    pub committed: u64,
    pub tx_mean_us: f64,
    pub ntx_mean_us: f64,
    pub leader_bytes_per_request: f64,
    pub follower_bytes_per_request: f64,
    /// 1 when every trace check passed.
    pub verified: u8,
}

/// Opaque simulation handle.
pub struct LcrSimulation {
    config: SimConfig,
    sim: Option<Simulation>,
    trace: Option<CString>,
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, LcrStatus> {
    if s.is_null() {
        return Err(fail(LcrStatus::NullPointer, "string argument is NULL"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(LcrStatus::InvalidUtf8, e.to_string()))
}

/// Build a simulation from scenario text in TOML form.
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string and `out` a valid place
/// to store the handle.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_new(
    scenario_toml: *const c_char,
    out: *mut *mut LcrSimulation,
) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcrStatus::NullPointer, "out is NULL");
        }
        let text = match read_str(scenario_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match Scenario::from_toml(text) {
            Ok(s) => s.sim_config(),
            Err(e) => return fail(LcrStatus::InvalidScenario, e.to_string()),
        };
        let sim = match Simulation::new(config.clone()) {
            Ok(s) => s,
            Err(e) => return fail(LcrStatus::InvalidScenario, e.to_string()),
        };
        let handle = Box::new(LcrSimulation {
            config,
            sim: Some(sim),
            trace: None,
        });
        *out = Box::into_raw(handle);
        LcrStatus::Ok
    })
}

unsafe fn live<'a>(h: *mut LcrSimulation) -> Result<&'a mut Simulation, LcrStatus> {
    let h = h
        .as_mut()
        .ok_or_else(|| fail(LcrStatus::NullPointer, "simulation handle is NULL"))?;
    h.sim
        .as_mut()
        .ok_or_else(|| fail(LcrStatus::Finished, "simulation already finished"))
}

/// Advance simulated time to `t_us`, processing every event up to it.
///
/// # Safety
/// `sim` must be a handle from [`lcr_simulation_new`] that was not freed.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_run_until(sim: *mut LcrSimulation, t_us: u64) -> LcrStatus {
    guard(|| match live(sim) {
        Ok(s) => match s.run_until(t_us) {
            Ok(()) => LcrStatus::Ok,
            Err(e) => fail(LcrStatus::SimulationFailed, e.to_string()),
        },
        Err(s) => s,
    })
}

/// Current simulated time in microseconds, or 0 for a NULL or finished
/// handle.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_now(sim: *const LcrSimulation) -> u64 {
    sim.as_ref()
        .and_then(|h| h.sim.as_ref())
        .map_or(0, |s| s.now())
}

/// Store the id of the current leader in `out`.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid place to write.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_leader(
    sim: *mut LcrSimulation,
    out: *mut u64,
) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcrStatus::NullPointer, "out is NULL");
        }
        match live(sim) {
            Ok(s) => match s.leader() {
                Some(l) => {
                    *out = l.0;
                    LcrStatus::Ok
                }
                None => fail(LcrStatus::NoLeader, "no leader at this time"),
            },
            Err(s) => s,
        }
    })
}

/// Store the commit index of `node` in `out`.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid place to write.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_commit_index(
    sim: *mut LcrSimulation,
    node: u64,
    out: *mut u64,
) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcrStatus::NullPointer, "out is NULL");
        }
        match live(sim) {
            Ok(s) if (node as usize) < s.node_count() => {
                *out = s.node(ServerId(node)).commit_index().get();
                LcrStatus::Ok
            }
            Ok(_) => fail(LcrStatus::InvalidArgument, format!("no node {node}")),
            Err(s) => s,
        }
    })
}

/// Run to the configured end, verify the trace and fill `out`. The handle
/// can afterwards only be queried with [`lcr_simulation_trace`] and freed.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid place to write.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_finish(
    sim: *mut LcrSimulation,
    out: *mut LcrRunSummary,
) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcrStatus::NullPointer, "out is NULL");
        }
        let Some(h) = sim.as_mut() else {
            return fail(LcrStatus::NullPointer, "simulation handle is NULL");
        };
        let Some(mut s) = h.sim.take() else {
            return fail(LcrStatus::Finished, "simulation already finished");
        };
        let end = h.config.duration_us + h.config.quiesce_us;
        if let Err(e) = s.run_until(end) {
            return fail(LcrStatus::SimulationFailed, e.to_string());
        }
        let result = s.finish();
        let verified = verify_trace_text(&result.trace).is_ok_and(|v| v.passed());
        let r = result.metrics.report();
        *out = LcrRunSummary {
            tps: r.tps,
            committed: r.committed,
            tx_mean_us: r.tx_latency.mean_us,
            ntx_mean_us: r.ntx_latency.mean_us,
            leader_bytes_per_request: r.leader_bytes_per_request,
            follower_bytes_per_request: r.follower_bytes_per_request,
            verified: u8::from(verified),
        };
        h.trace = CString::new(result.trace).ok();
        LcrStatus::Ok
    })
}

/// Trace text of a finished simulation, or NULL before
/// [`lcr_simulation_finish`]. Owned by the handle.
///
/// # Safety
/// `sim` must be NULL or a handle that was not freed.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_trace(sim: *const LcrSimulation) -> *const c_char {
    sim.as_ref()
        .and_then(|h| h.trace.as_ref())
        .map_or(ptr::null(), |t| t.as_ptr())
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `sim` must be NULL or a handle from [`lcr_simulation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lcr_simulation_free(sim: *mut LcrSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Run a whole scenario and report whether its trace verifies.
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string and `passed` a valid
/// place to write.
#[no_mangle]
pub unsafe extern "C" fn lcr_run_and_verify(
    scenario_toml: *const c_char,
    passed: *mut u8,
) -> LcrStatus {
    guard(|| {
        if passed.is_null() {
            return fail(LcrStatus::NullPointer, "passed is NULL");
        }
        let text = match read_str(scenario_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match Scenario::from_toml(text) {
            Ok(s) => s.sim_config(),
            Err(e) => return fail(LcrStatus::InvalidScenario, e.to_string()),
        };
        match execute(config) {
            Ok(a) => {
                *passed = u8::from(a.verdict.passed());
                LcrStatus::Ok
            }
            Err((e, _)) => fail(LcrStatus::SimulationFailed, e.to_string()),
        }
    })
}

/// An allocation window as seen from C.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LcrWindow {
    pub generation: u64,
    pub start: u64,
    pub end: u64,
    /// Nonzero when the window still accepts allocations.
    pub open: u8,
}

/// Server that owns `index` under `generation`.
#[no_mangle]
pub extern "C" fn lcr_owner_of(index: u64, generation: u64) -> u64 {
    if generation == 0 {
        set_error("generation must be positive");
        return u64::MAX;
    }
    owner_of(LogIndex(index), Generation(generation)).0
}

/// Next future index for `self_id` above `future_last` that falls in one of
/// the open `windows`.
///
/// # Safety
/// `windows` must point to `window_count` readable elements (or be NULL when
/// the count is 0) and `out` must be a valid place to write.
#[no_mangle]
pub unsafe extern "C" fn lcr_allocate_future_index(
    self_id: u64,
    generation: u64,
    future_last: u64,
    windows: *const LcrWindow,
    window_count: usize,
    out: *mut u64,
) -> LcrStatus {
    guard(|| {
        if out.is_null() || (windows.is_null() && window_count > 0) {
            return fail(LcrStatus::NullPointer, "NULL argument");
        }
        if generation == 0 {
            return fail(LcrStatus::InvalidArgument, "generation must be positive");
        }
        let ws: Vec<Window> = if window_count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(windows, window_count)
                .iter()
                .map(|w| Window {
                    generation: Generation(w.generation),
                    start: LogIndex(w.start),
                    end: LogIndex(w.end),
                    state: if w.open != 0 {
                        WindowState::Open
                    } else {
                        WindowState::Closed
                    },
                })
                .collect()
        };
        match allocate_future_index(
            ServerId(self_id),
            Generation(generation),
            LogIndex(future_last),
            &ws,
        ) {
            Ok(i) => {
                *out = i.get();
                LcrStatus::Ok
            }
            Err(e @ AllocError::NoOpenWindow { .. }) => {
                fail(LcrStatus::NoOpenWindow, e.to_string())
            }
            Err(e) => fail(LcrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Move `index`, owned by `self_id` under generation `old`, onto the grid of
/// generation `new`.
///
/// # Safety
/// `out` must be a valid place to write.
#[no_mangle]
pub unsafe extern "C" fn lcr_reallocate_index(
    index: u64,
    old: u64,
    new: u64,
    self_id: u64,
    out: *mut u64,
) -> LcrStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcrStatus::NullPointer, "out is NULL");
        }
        if old == 0 {
            return fail(LcrStatus::InvalidArgument, "generation must be positive");
        }
        match reallocate_index(
            LogIndex(index),
            Generation(old),
            Generation(new),
            ServerId(self_id),
        ) {
            Ok(i) => {
                *out = i.get();
                LcrStatus::Ok
            }
            Err(e) => fail(LcrStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, LcrStatus::Panic);
        let msg = unsafe { CStr::from_ptr(lcr_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "boom");
    }

    #[test]
    fn owner_of_rejects_zero_generation() {
        assert_eq!(lcr_owner_of(17, 5), 2);
        assert_eq!(lcr_owner_of(17, 0), u64::MAX);
    }
}
