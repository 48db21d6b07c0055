use gobi_core::harness::{write_step_csv, AGGREGATE_COLUMNS, STEP_COLUMNS};
use gobi_core::hashing::hash_bytes;
use gobi_core::{train, EnvSpec, HashCode, TrainConfig};

/// Textbook FNV-1a, kept separate from the library implementation.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[test]
fn fnv_reference_vectors() {
    // published test vectors for the 64-bit variant
    assert_eq!(hash_bytes(b""), HashCode(0xcbf29ce484222325));
    assert_eq!(hash_bytes(b"a"), HashCode(0xaf63dc4c8601ec8c));
    assert_eq!(hash_bytes(b"foobar"), HashCode(0x85944171f73967e8));
}

#[test]
fn observation_codes_are_pinned() {
    let spec: EnvSpec = "multiroom-N2-S5".parse().unwrap();
    let env = spec.generate(0).unwrap();
    let obs = env.observe();
    assert_eq!(obs.as_bytes().len(), 147);
    assert_eq!(obs.code(), HashCode(fnv1a(obs.as_bytes())));
    assert_eq!(obs.code(), HashCode(0x52e903cc1ff25f13));

    let pano = env.panorama();
    let bytes: Vec<u8> = pano
        .views
        .iter()
        .flat_map(|v| v.as_bytes().iter().copied())
        .collect();
    assert_eq!(pano.code(), HashCode(fnv1a(&bytes)));
    assert_eq!(pano.code(), HashCode(0xd9d924857ba2536a));
}

#[test]
fn csv_headers_are_fixed() {
    assert_eq!(
        STEP_COLUMNS.join(","),
        "episode,step,total_env_steps,r_ext,r_int,lambda,delta_m,buffer_size,success"
    );
    assert_eq!(
        AGGREGATE_COLUMNS.join(","),
        "total_env_steps,mean_return,std_return,mean_success,std_success,n_seeds"
    );
}

#[test]
fn step_log_head_matches_fixture() {
    let run = train(&TrainConfig {
        episodes: 2,
        seed: 7,
        ..TrainConfig::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    write_step_csv(&mut buf, &run.episodes).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let expected = include_str!("fixtures/step_log_head.csv");
    let head: Vec<&str> = text.lines().take(expected.lines().count()).collect();
    assert_eq!(head, expected.lines().collect::<Vec<_>>());
}
