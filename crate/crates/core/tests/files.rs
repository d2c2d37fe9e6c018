use std::path::{Path, PathBuf};

use carnot::algebra::Element;
use carnot::catalog::{by_name, engel, standard_names};
use carnot::io::{load_group_file, parse_group_file, read_json, resolve_group, save_group_file, validate_group_file, ExperimentFile, GroupFile};
use carnot::scalar::parse_rational_list;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    v.sort();
    v
}

#[test]
fn schemas_are_json() {
    for p in json_files(&root().join("schemas")) {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v.get("$schema").is_some(), "{}", p.display());
    }
}

#[test]
fn experiment_files_build() {
    let files: Vec<_> = json_files(&root().join("data")).into_iter().filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("area_")).collect();
    assert!(files.len() >= 5);
    for p in files {
        let e: ExperimentFile = read_json(&p).unwrap();
        e.build().unwrap_or_else(|err| panic!("{}: {err}", p.display()));
    }
}

#[test]
fn engel_file_matches_catalog() {
    let from_file = parse_group_file(&root().join("data/groups/engel.json")).unwrap();
    let cat = engel();
    let x = Element::new(parse_rational_list("1/2,-3,2/7,5").unwrap());
    let y = Element::new(parse_rational_list("-4/3,1,0,1/9").unwrap());
    assert_eq!(from_file.group.multiply(&x, &y).unwrap(), cat.group.multiply(&x, &y).unwrap());
}

#[test]
fn group_files_validate() {
    for p in json_files(&root().join("data/groups")) {
        let report = validate_group_file(&p).unwrap();
        assert!(report.passes(), "{}: {report}", p.display());
        parse_group_file(&p).unwrap();
    }
}

#[test]
fn two_step_file_resolves() {
    let g = resolve_group(&format!("two-step:{}", root().join("data/two_step_free3.json").display())).unwrap();
    assert_eq!(g.gradation().layer_dims(), &[3, 3]);
}

#[test]
fn catalog_round_trips_through_group_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in standard_names() {
        let g = by_name(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        save_group_file(&path, &GroupFile::from_bundle(&g)).unwrap();
        let back = parse_group_file(&path).unwrap();
        assert_eq!(back.group.algebra().structure_constants(), g.group.algebra().structure_constants(), "{name}");
        assert_eq!(back.norm.sigmas(), g.norm.sigmas(), "{name}");
        assert_eq!(load_group_file(&path).unwrap(), GroupFile::from_bundle(&g));
    }
}
