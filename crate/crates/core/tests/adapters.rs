//! Adapters run against synthetic directory trees in each published layout.
//! Image files are empty placeholders; adapters only check existence.

use std::fs;
use std::path::Path;

use deepssim::adapters::{adapt_dataset, AdaptOptions, DatasetKind, ReferenceKind};
use deepssim::dataset::{load_manifest, Manifest, Polarity};

fn touch(path: &Path) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, b"").unwrap();
}

fn adapt(kind: DatasetKind, root: &Path) -> (deepssim::adapters::AdaptSummary, std::path::PathBuf) {
    let out = root.join("manifest.csv");
    let summary = adapt_dataset(kind, root, &out, AdaptOptions::default()).unwrap();
    (summary, out)
}

#[test]
fn tid2013_canonical_order() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut mos = String::new();
    for r in 1..=25 {
        touch(&root.join(format!("reference_images/I{r:02}.BMP")));
        for d in 1..=24 {
            for l in 1..=5 {
                touch(&root.join(format!("distorted_images/i{r:02}_{d:02}_{l}.bmp")));
                mos.push_str(&format!("{}\n", (r * 1000 + d * 10 + l) as f64 / 1000.0));
            }
        }
    }
    fs::write(root.join("mos.txt"), mos).unwrap();
    let (summary, out) = adapt(DatasetKind::Tid2013, root);
    assert_eq!((summary.rows, summary.groups, summary.skipped), (3000, 25, 0));
    assert!(summary.matches_published());

    let Manifest::Scores(records) = load_manifest(&out).unwrap().manifest else {
        panic!("score manifest expected");
    };
    assert_eq!(records.len(), 3000);
    let r = &records[24 * 5 + 2]; // second reference, first distortion, level 3
    assert!(r.test_path.ends_with("i02_01_3.bmp"));
    assert!(r.ref_path.ends_with("I02.BMP"));
    assert_eq!(r.subjective, 2.013);
    assert_eq!(r.polarity, Polarity::HigherBetter);
}

#[test]
fn tid2013_missing_images_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    touch(&root.join("reference_images/i01.bmp"));
    touch(&root.join("distorted_images/i01_01_1.bmp"));
    fs::write(root.join("mos_with_names.txt"), "5.1 i01_01_1.bmp\n4.2 i01_01_2.bmp\n").unwrap();
    let (summary, _) = adapt(DatasetKind::Tid2013, root);
    assert_eq!((summary.rows, summary.skipped), (1, 1));
    assert!(!summary.matches_published());
}

#[test]
fn kadid_full_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut csv = String::from("dist_img,ref_img,dmos,var\n");
    for r in 1..=81 {
        touch(&root.join(format!("images/I{r:02}.png")));
        for d in 1..=25 {
            for l in 1..=5 {
                let name = format!("I{r:02}_{d:02}_{l:02}.png");
                touch(&root.join("images").join(&name));
                csv.push_str(&format!("{name},I{r:02}.png,{:.2},0.5\n", 5.0 - l as f64 * 0.7));
            }
        }
    }
    fs::write(root.join("dmos.csv"), csv).unwrap();
    let (summary, out) = adapt(DatasetKind::Kadid10k, root);
    assert_eq!((summary.rows, summary.groups), (10125, 81));
    let loaded = load_manifest(&out).unwrap();
    assert_eq!(loaded.manifest.len(), 10125);
    let records = loaded.manifest.into_eval_records().unwrap();
    assert!(records.iter().all(|r| r.polarity == Polarity::HigherBetter));
}

#[test]
fn retargetme_votes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut csv = String::from("group,ref,test,votes\n");
    let ops = ["cr", "sv", "multiop", "sc", "sm", "sns", "warp", "lg"];
    for g in 0..37 {
        touch(&root.join(format!("img{g}/orig.png")));
        for (i, op) in ops.iter().enumerate() {
            touch(&root.join(format!("img{g}/{op}.png")));
            csv.push_str(&format!("img{g},img{g}/orig.png,img{g}/{op}.png,{}\n", (g + i * 3) % 11));
        }
    }
    fs::write(root.join("votes.csv"), csv).unwrap();
    let (summary, out) = adapt(DatasetKind::RetargetMe, root);
    assert_eq!((summary.rows, summary.groups), (296, 37));
    assert!(summary.matches_published());

    let loaded = load_manifest(&out).unwrap();
    let Manifest::Votes(votes) = &loaded.manifest else {
        panic!("vote manifest expected");
    };
    assert_eq!(votes.len(), 296);
    assert!(votes.iter().all(|v| v.ref_path.as_ref().unwrap().ends_with("orig.png")));
    let records = loaded.manifest.into_eval_records().unwrap();
    assert_eq!(records[3].subjective, 9.0);
    assert_eq!(records[3].group_id.as_deref(), Some("img0"));
}

#[test]
fn live_skips_reference_copies() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut dmos = vec![0.0; 982];
    let mut orgs = vec![0u8; 982];
    touch(&root.join("refimgs/bikes.bmp"));
    // three jpeg images (block starts at 227); the second is an undistorted copy
    for (n, value, org) in [(1, 40.5, 0u8), (2, 0.0, 1), (3, 61.25, 0)] {
        dmos[227 + n - 1] = value;
        orgs[227 + n - 1] = org;
        touch(&root.join(format!("jpeg/img{n}.bmp")));
    }
    let join = |v: &[String]| v.join(" ");
    fs::write(root.join("dmos.txt"), join(&dmos.iter().map(|v| v.to_string()).collect::<Vec<_>>())).unwrap();
    fs::write(root.join("orgs.txt"), join(&orgs.iter().map(|v| v.to_string()).collect::<Vec<_>>())).unwrap();
    for ty in ["jp2k", "wn", "gblur", "fastfading"] {
        fs::create_dir_all(root.join(ty)).unwrap();
        fs::write(root.join(ty).join("info.txt"), "").unwrap();
    }
    fs::write(
        root.join("jpeg/info.txt"),
        "bikes.bmp img1.bmp 0.5\nbikes.bmp img2.bmp 0\nbikes.bmp img3.bmp 1.2\nbikes.bmp img4.bmp 2.0\n",
    )
    .unwrap();
    let (summary, out) = adapt(DatasetKind::Live, root);
    assert_eq!((summary.rows, summary.skipped), (2, 1));
    let records = load_manifest(&out).unwrap().manifest.into_eval_records().unwrap();
    assert_eq!(records[0].subjective, 40.5);
    assert_eq!(records[1].subjective, 61.25);
    assert!(records.iter().all(|r| r.polarity == Polarity::LowerBetter));
}

#[test]
fn csiq_type_directories() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    touch(&root.join("src_imgs/1600.png"));
    touch(&root.join("dst_imgs/awgn/1600.AWGN.1.png"));
    touch(&root.join("dst_imgs/jpeg2000/1600.jpeg2000.3.png"));
    fs::write(
        root.join("csiq_dmos.csv"),
        "image,dst_idx,dst_type,dst_lev,dmos_std,dmos\n1600,1,noise,1,0.01,0.062\n1600,3,jpeg 2000,3,0.02,0.31\n",
    )
    .unwrap();
    let (summary, _) = adapt(DatasetKind::Csiq, root);
    assert_eq!((summary.rows, summary.groups), (2, 1));
}

#[test]
fn sr_label_table_reference_choice() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for f in ["hr/a.png", "lr/a.png", "sr/a_x2.png", "sr/a_x4.png"] {
        touch(&root.join(f));
    }
    fs::write(
        root.join("labels.csv"),
        "ref,test,score,ref_lr\nhr/a.png,sr/a_x2.png,0.7,lr/a.png\nhr/a.png,sr/a_x4.png,0.4,lr/a.png\n",
    )
    .unwrap();
    let out = root.join("m.csv");
    let opts = AdaptOptions { reference: ReferenceKind::Lr };
    adapt_dataset(DatasetKind::Qads, root, &out, opts).unwrap();
    let records = load_manifest(&out).unwrap().manifest.into_eval_records().unwrap();
    assert!(records.iter().all(|r| r.ref_path.ends_with("lr/a.png")));
}

#[test]
fn unknown_layout_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = adapt_dataset(DatasetKind::Pipal, dir.path(), &dir.path().join("m.csv"), AdaptOptions::default())
        .unwrap_err();
    assert!(err.to_string().contains("Train_Label"), "{err}");
}
