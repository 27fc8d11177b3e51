use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use fraclop_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fraclop_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn solve_round_trip_through_handles() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(fraclop_problem_new(2, 15, 0.5, FraclopDesign::Box, &mut p), FraclopStatus::Ok);
        assert_eq!(fraclop_problem_set_weights(p, 1.0, 0.5), FraclopStatus::Ok);
        assert_eq!(fraclop_problem_set_solver(p, 1e-8, 1e-7, 30, 60), FraclopStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(fraclop_solve(p, &mut s), FraclopStatus::Ok, "{}", last_error());
        assert!(fraclop_solution_iterations(s) >= 1);
        assert!(fraclop_solution_residual(s) <= 1e-7);
        assert!(fraclop_solution_max_rank(s) >= 1);

        let mut u = ptr::null_mut();
        assert_eq!(fraclop_solution_control(s, &mut u), FraclopStatus::Ok);
        assert_eq!(fraclop_tensor_ndim(u), 2);
        let mut shape = [0usize; 2];
        assert_eq!(fraclop_tensor_shape(u, shape.as_mut_ptr(), 2), FraclopStatus::Ok);
        assert_eq!(shape, [15, 15]);
        let mut v = 0.0;
        assert_eq!(fraclop_tensor_entry(u, [7usize, 7].as_ptr(), 2, &mut v), FraclopStatus::Ok);
        assert!(v > 0.0, "control at the design centre should be positive, got {v}");

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("u.canon").to_str().unwrap()).unwrap();
        assert_eq!(fraclop_tensor_save(u, path.as_ptr()), FraclopStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fraclop_tensor_load(path.as_ptr(), &mut back), FraclopStatus::Ok);
        let mut w = 0.0;
        assert_eq!(fraclop_tensor_entry(back, [7usize, 7].as_ptr(), 2, &mut w), FraclopStatus::Ok);
        assert_eq!(v.to_bits(), w.to_bits());

        let mut y = ptr::null_mut();
        assert_eq!(fraclop_solution_state(s, &mut y), FraclopStatus::Ok);
        assert_eq!(fraclop_tensor_ndim(y), 2);

        fraclop_tensor_free(y);
        fraclop_tensor_free(back);
        fraclop_tensor_free(u);
        fraclop_solution_free(s);
        fraclop_problem_free(p);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(fraclop_problem_new(4, 15, 0.5, FraclopDesign::H, &mut p), FraclopStatus::InvalidArgument);
        assert!(p.is_null());
        assert!(last_error().contains("dimension"), "{}", last_error());

        assert_eq!(fraclop_problem_new(2, 15, 1.5, FraclopDesign::H, &mut p), FraclopStatus::InvalidArgument);
        assert_eq!(fraclop_problem_new(2, 15, 1.0, FraclopDesign::H, ptr::null_mut()), FraclopStatus::NullPointer);

        assert_eq!(fraclop_problem_new(2, 9, 1.0, FraclopDesign::H, &mut p), FraclopStatus::Ok);
        assert_eq!(fraclop_problem_set_weights(p, -1.0, 1.0), FraclopStatus::InvalidArgument);
        assert_eq!(fraclop_problem_set_precond(p, FraclopPrecond::Aniso, 0, 1e-2), FraclopStatus::InvalidArgument);
        assert_eq!(fraclop_problem_set_precond(p, FraclopPrecond::Aniso, 6, 1e-2), FraclopStatus::Ok);
        assert_eq!(fraclop_problem_set_solver(p, 1e-8, 1e-14, 1, 40), FraclopStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(fraclop_solve(p, &mut s), FraclopStatus::NotConverged);
        assert_eq!(fraclop_solution_iterations(s), 1);

        let mut u = ptr::null_mut();
        assert_eq!(fraclop_solution_control(s, &mut u), FraclopStatus::Ok);
        let mut v = 0.0;
        assert_eq!(fraclop_tensor_entry(u, [9usize, 0].as_ptr(), 2, &mut v), FraclopStatus::ShapeMismatch);
        assert_eq!(fraclop_tensor_entry(u, [0usize].as_ptr(), 1, &mut v), FraclopStatus::ShapeMismatch);
        let mut shape = [0usize; 3];
        assert_eq!(fraclop_tensor_shape(u, shape.as_mut_ptr(), 3), FraclopStatus::ShapeMismatch);

        let missing = CString::new("/nonexistent/dir/x.canon").unwrap();
        let mut t = ptr::null_mut();
        assert_eq!(fraclop_tensor_load(missing.as_ptr(), &mut t), FraclopStatus::Io);

        assert_eq!(fraclop_tensor_rank(ptr::null()), 0);
        assert!(fraclop_solution_residual(ptr::null()).is_nan());
        fraclop_tensor_free(ptr::null_mut());

        fraclop_tensor_free(u);
        fraclop_solution_free(s);
        fraclop_problem_free(p);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(fraclop_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/fraclop.h");
    let src = std::env::temp_dir().join(format!("fraclop_header_{}.c", std::process::id()));
    std::fs::write(
        &src,
        "#include \"fraclop.h\"\nint main(void) { FraclopProblem *p = 0; (void)p; return FRACLOP_STATUS_OK; }\n",
    )
    .unwrap();
    let include = std::path::Path::new(header).parent().unwrap();
    let status = match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        // no C compiler on this machine: nothing to check
        Err(_) => return,
    };
    let _ = std::fs::remove_file(&src);
    assert!(status.success(), "header failed to compile");
}
