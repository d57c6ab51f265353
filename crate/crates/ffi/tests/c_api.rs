use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use relboost::synth::{generate, Policy, SynthConfig, SynthParams};
use relboost::{ingest, train, Schema, TrainConfig};
use relboost_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn predictions_match_the_library() {
    let schema = Schema::default_clinical();
    let params = SynthParams {
        n_subjects: 6,
        hours_min: 60,
        hours_max: 60,
        ..SynthParams::default()
    };
    let out = generate(&SynthConfig::new(params, schema.clone(), Policy::standard())).unwrap();
    let (by_action, store) = ingest::generate_all(&out.store, schema.actions()).unwrap();
    let cfg = TrainConfig {
        n_trees: 3,
        ..TrainConfig::default()
    };
    let model = train(&store, &by_action["phincr"], "phincr", &schema, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.json");
    model.save(&model_path).unwrap();
    let facts_path = dir.path().join("f.facts");
    std::fs::write(&facts_path, relboost::logic::render_facts(&store.facts(), &schema).unwrap()).unwrap();

    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(rb_model_load(cstr(model_path.to_str().unwrap()).as_ptr(), &mut m), RbStatus::Ok);
        assert_eq!(rb_model_tree_count(m), 3);

        let mut target = ptr::null_mut();
        assert_eq!(rb_model_target(m, &mut target), RbStatus::Ok);
        assert_eq!(CStr::from_ptr(target).to_str().unwrap(), "phincr");
        rb_string_free(target);

        let mut f = ptr::null_mut();
        assert_eq!(rb_facts_load(m, cstr(facts_path.to_str().unwrap()).as_ptr(), &mut f), RbStatus::Ok);
        for ex in by_action["phincr"].iter().step_by(17) {
            let mut p = f64::NAN;
            let subject = cstr(&ex.subject);
            assert_eq!(rb_predict(m, f, subject.as_ptr(), ex.time, &mut p), RbStatus::Ok);
            assert_eq!(p, model.predict(&store, &ex.subject, ex.time).unwrap());
        }

        let mut rules = ptr::null_mut();
        assert_eq!(rb_model_rules(m, 0, false, &mut rules), RbStatus::Ok);
        let text = CStr::from_ptr(rules).to_str().unwrap().to_string();
        rb_string_free(rules);
        assert!(text.starts_with("# target phincr psi0 0\n# tree 0\n"));
        assert!(!text.contains("# tree 1"));
        assert_eq!(rb_model_rules(m, 3, false, &mut rules), RbStatus::InvalidData);

        rb_facts_free(f);
        rb_model_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(rb_model_load(cstr("/nonexistent/m.json").as_ptr(), &mut m), RbStatus::Io);
        assert_eq!(rb_model_from_json(cstr("{").as_ptr(), &mut m), RbStatus::InvalidModel);
        let msg = CStr::from_ptr(rb_last_error_message()).to_str().unwrap();
        assert!(!msg.is_empty());

        let json = relboost::BoostedModel::empty("mapincr", 0.0, Schema::default_clinical())
            .to_json()
            .unwrap();
        assert_eq!(rb_model_from_json(cstr(&json).as_ptr(), &mut m), RbStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(rb_facts_parse(m, cstr("map(s1,0,bogus).").as_ptr(), &mut f), RbStatus::InvalidData);
        assert_eq!(rb_facts_parse(m, cstr("map(s1,0").as_ptr(), &mut f), RbStatus::Parse);
        assert_eq!(rb_facts_parse(m, cstr("map(s1,0,60-70).").as_ptr(), &mut f), RbStatus::Ok);

        let mut p = 0.0;
        assert_eq!(rb_predict(m, f, cstr("s1").as_ptr(), 0, &mut p), RbStatus::Ok);
        assert_eq!(p, 0.5);
        assert_eq!(rb_predict(m, ptr::null(), cstr("s1").as_ptr(), 0, &mut p), RbStatus::NullArgument);
        let bad = [0xffu8, 0];
        assert_eq!(rb_predict(m, f, bad.as_ptr().cast(), 0, &mut p), RbStatus::InvalidUtf8);
        rb_facts_free(f);
        rb_model_free(m);
        rb_model_free(ptr::null_mut());
        rb_string_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("relboost.h")).unwrap();
    for f in ["rb_model_load", "rb_facts_load", "rb_predict", "rb_string_free", "RB_STATUS_OK"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"relboost.h\"\nint main(void) {\n  RbModel *m = 0;\n  RbStatus s = rb_model_load(\"x\", &m);\n  rb_model_free(m);\n  return s == RB_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(status.success());
}
