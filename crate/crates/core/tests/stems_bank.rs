use std::sync::OnceLock;

use tiltmix_core::analysis::{self, max_jump, verify_band, MIN_BAND_FRACTION};
use tiltmix_core::stems::{generate_stems, Manifest, StemBank, StemParams, TARGET_RMS_DBFS};
use tiltmix_core::InstrumentId;

fn bank42() -> &'static StemBank {
    static BANK: OnceLock<StemBank> = OnceLock::new();
    BANK.get_or_init(|| generate_stems(&StemParams::default()).unwrap())
}

#[test]
fn default_bank_length() {
    // 48000 * 60 / 120 * 16
    let expected = 48_000 * 60 / 120 * 16;
    assert_eq!(expected, 384_000);
    for id in InstrumentId::ALL {
        assert_eq!(bank42().stem(id).len(), expected, "{id}");
    }
    assert_eq!(bank42().loop_len(), expected);
}

#[test]
fn generation_is_bit_identical_per_seed() {
    let again = generate_stems(&StemParams::default()).unwrap();
    for id in InstrumentId::ALL {
        let a = bank42().stem(id);
        let b = again.stem(id);
        assert!(
            a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            "{id}"
        );
    }
    let other = generate_stems(&StemParams {
        seed: 43,
        ..Default::default()
    })
    .unwrap();
    assert_ne!(
        other.stem(InstrumentId::Drums),
        bank42().stem(InstrumentId::Drums)
    );
}

#[test]
fn piano_and_keyboard_share_the_melody() {
    for seed in [0, 42, 1000, u64::MAX] {
        let bank = generate_stems(&StemParams {
            seed,
            bpm: 150.0,
            sample_rate_hz: 44_100,
        })
        .unwrap();
        let score = bank.score().unwrap();
        assert_eq!(
            score.onsets(InstrumentId::Piano),
            score.onsets(InstrumentId::Keyboard)
        );
        assert_eq!(
            score.notes(InstrumentId::Piano),
            score.notes(InstrumentId::Keyboard)
        );
    }
}

#[test]
fn every_stem_is_in_band() {
    for id in InstrumentId::ALL {
        let frac = verify_band(bank42().stem(id), 48_000).unwrap();
        assert!(frac >= MIN_BAND_FRACTION, "{id}: {frac}");
    }
}

#[test]
fn levels_are_matched_and_under_full_scale() {
    let rms: Vec<f64> = InstrumentId::ALL
        .iter()
        .map(|&id| analysis::to_dbfs(analysis::rms(bank42().stem(id))))
        .collect();
    for (id, &db) in InstrumentId::ALL.iter().zip(&rms) {
        assert!((db - TARGET_RMS_DBFS).abs() <= 0.25, "{id}: {db}");
        assert!(analysis::peak(bank42().stem(*id)) <= 1.0);
    }
    for a in &rms {
        for b in &rms {
            assert!((a - b).abs() <= 0.25);
        }
    }
}

#[test]
fn loop_seams_do_not_click() {
    for id in InstrumentId::ALL {
        let s = bank42().stem(id);
        let seam = (f64::from(s[s.len() - 1]) - f64::from(s[0])).abs();
        assert!(seam <= 0.05, "{id}: seam {seam}");
        // Two passes back to back: the step across the seam is no larger
        // than the largest step inside the stem.
        let two: Vec<f32> = s.iter().chain(s.iter()).copied().collect();
        let n = s.len();
        let across = (f64::from(two[n]) - f64::from(two[n - 1])).abs();
        assert!(across <= max_jump(s), "{id}");
    }
}

#[test]
fn other_rates_and_tempos() {
    let bank = generate_stems(&StemParams {
        seed: 5,
        sample_rate_hz: 44_100,
        bpm: 60.0,
    })
    .unwrap();
    assert_eq!(bank.loop_len(), 705_600);
    for id in InstrumentId::ALL {
        let s = bank.stem(id);
        assert!(analysis::peak(s) <= 1.0, "{id}");
        assert!(verify_band(s, 44_100).unwrap() >= MIN_BAND_FRACTION, "{id}");
    }
}

#[test]
fn export_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = bank42().export(dir.path()).unwrap();
    assert_eq!(manifest.stems.len(), 5);
    assert_eq!(manifest.seed, Some(42));
    assert_eq!(manifest.bpm, 120.0);
    for s in &manifest.stems {
        assert!(s.band_fraction >= MIN_BAND_FRACTION);
        let bytes = std::fs::metadata(dir.path().join(&s.file)).unwrap().len();
        assert_eq!(bytes, 384_000 * 4 + 56);
    }
    let text = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert_eq!(Manifest::parse(&text).unwrap(), manifest);

    let loaded = StemBank::load_dir(dir.path()).unwrap();
    assert_eq!(loaded.seed(), Some(42));
    for id in InstrumentId::ALL {
        assert_eq!(loaded.stem(id), bank42().stem(id));
    }

    std::fs::remove_file(dir.path().join("synth.wav")).unwrap();
    assert!(StemBank::load_dir(dir.path()).is_err());
}
