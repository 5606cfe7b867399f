use std::ffi::CStr;
use std::ptr;

use sixbq_ffi::*;

const N: usize = 3;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sixbq_last_error()) }.to_string_lossy().into_owned()
}

/// `u = a cos(x)`, `v = 0`, coefficient arrays ordered `k = -N..=N`.
fn cosine_state(a: f64) -> *mut SixbqState {
    let mut u_re = [0.0; 2 * N + 1];
    u_re[N - 1] = a / 2.0;
    u_re[N + 1] = a / 2.0;
    let z = [0.0; 2 * N + 1];
    let mut out = ptr::null_mut();
    let st = unsafe { sixbq_state_new(N, u_re.as_ptr(), z.as_ptr(), z.as_ptr(), z.as_ptr(), &mut out) };
    assert_eq!(st, SixbqStatus::Ok);
    out
}

#[test]
fn omega_and_version() {
    let mut w = 0.0;
    unsafe {
        assert_eq!(sixbq_omega(2, 1, &mut w), SixbqStatus::Ok);
        assert!((w - 84f64.sqrt()).abs() < 1e-12);
        assert_eq!(sixbq_omega(1, -1, &mut w), SixbqStatus::Ok);
        assert_eq!(w, 1.0);
        assert_eq!(sixbq_omega(1, 3, &mut w), SixbqStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(sixbq_omega(1, 1, ptr::null_mut()), SixbqStatus::NullPointer);
    }
    let v = unsafe { CStr::from_ptr(sixbq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn state_round_trip_and_energy() {
    let s = cosine_state(0.2);
    unsafe {
        assert_eq!(sixbq_state_max_mode(s), N);
        let mut bufs = [[0.0; 2 * N + 1]; 4];
        let [a, b, c, d] = &mut bufs;
        assert_eq!(sixbq_state_coeffs(s, a.as_mut_ptr(), b.as_mut_ptr(), c.as_mut_ptr(), d.as_mut_ptr()), SixbqStatus::Ok);
        assert_eq!(bufs[0][N + 1], 0.1);
        let mut e = 0.0;
        assert_eq!(sixbq_state_energy(s, 1, &mut e), SixbqStatus::Ok);
        // π · 2 · ω_1² · 0.1² with ω_1² = 3.
        assert!((e - std::f64::consts::PI * 2.0 * 3.0 * 0.01).abs() < 1e-14);
        sixbq_state_free(s);
        sixbq_state_free(ptr::null_mut());
    }
}

#[test]
fn linear_control_hits_target() {
    let a = cosine_state(0.1);
    let b = cosine_state(-0.05);
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sixbq_profile_builtin(1, &mut g), SixbqStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(sixbq_control_linear(a, b, g, 1.0, 1, &mut c), SixbqStatus::Ok);
        assert!(sixbq_control_terminal_error(c) < 1e-8);
        assert!(sixbq_control_norm(c) > 0.0);
        let (mut re, mut im) = ([0.0; 2 * N + 1], [0.0; 2 * N + 1]);
        assert_eq!(sixbq_control_eval(c, 0.5, re.as_mut_ptr(), im.as_mut_ptr()), SixbqStatus::Ok);
        assert!(re[N].abs() < 1e-12);
        sixbq_control_free(c);
        sixbq_profile_free(g);
        sixbq_state_free(a);
        sixbq_state_free(b);
    }
}

#[test]
fn stabilize_decays() {
    let a = cosine_state(0.1);
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sixbq_profile_builtin(0, &mut g), SixbqStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(sixbq_stabilize(a, g, 1.0, 20.0, 1e-2, 1, false, &mut s), SixbqStatus::Ok);
        let len = sixbq_series_len(s);
        assert!(len > 2);
        let mut e = vec![0.0; len];
        assert_eq!(sixbq_series_copy(s, ptr::null_mut(), e.as_mut_ptr(), ptr::null_mut(), len), SixbqStatus::Ok);
        assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert_eq!(sixbq_series_copy(s, ptr::null_mut(), e.as_mut_ptr(), ptr::null_mut(), len + 1), SixbqStatus::InvalidArgument);
        let mut fit = SixbqDecayFit::default();
        assert_eq!(sixbq_series_energy_fit(s, &mut fit), SixbqStatus::Ok);
        // Uniform g damps every mode's energy at rate K/2π.
        assert!((fit.gamma_hat * 2.0 * std::f64::consts::PI - 1.0).abs() < 0.05, "{}", fit.gamma_hat);
        sixbq_series_free(s);
        sixbq_profile_free(g);
        sixbq_state_free(a);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sixbq_profile_builtin(9, &mut g), SixbqStatus::InvalidArgument);
        assert!(g.is_null());
        assert!(last_error().contains("kind"));

        let z = [0.0; 2 * N + 1];
        let mut v_re = z;
        v_re[N] = 0.3;
        let mut s = ptr::null_mut();
        assert_eq!(sixbq_state_new(N, z.as_ptr(), z.as_ptr(), v_re.as_ptr(), z.as_ptr(), &mut s), SixbqStatus::Ok);
        sixbq_profile_builtin(1, &mut g);
        let mut series = ptr::null_mut();
        let st = sixbq_stabilize(s, g, 1.0, 1.0, 1e-2, 1, false, &mut series);
        assert_eq!(st, SixbqStatus::Constraint);
        assert!(series.is_null());

        let mut c = ptr::null_mut();
        assert_eq!(sixbq_control_linear(s, ptr::null(), g, 1.0, 1, &mut c), SixbqStatus::NullPointer);
        sixbq_profile_free(g);
        sixbq_state_free(s);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sixbq.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let names: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 20);
    for name in names {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["SixbqState", "SixbqProfile", "SixbqControl", "SixbqEnergySeries", "SIXBQ_STATUS_PANIC"] {
        assert!(header.contains(ty), "{ty}");
    }
}
