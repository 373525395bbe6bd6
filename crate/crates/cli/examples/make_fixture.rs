//! Regenerates `fixtures/site.rdb`, a synthetic monthly record for one
//! monitoring site (1978-2021) with a known stage-by-stage shape:
//!
//! | stage           | rows | vars |
//! |-----------------|------|------|
//! | ingest          | 534  | 34   |
//! | filter          | 468  | 30   |
//! | annual_mean     | 40   | 30   |
//! | drop_na_columns | 40   | 17   |
//! | drop_redundant  | 40   | 11   |
//! | difference      | 39   | 11   |
//!
//! 528 monthly rows plus 6 QA-medium rows; inside 1980-2019, 12 sampling
//! dates lack nitrate (the required variable). Thirteen variables lose one
//! whole calendar year, four are only dense outside the date window, and six
//! composites are exact sums of their parts.
//!
//! Usage: cargo run -p nitrosep-cli --example make_fixture [out.rdb]

use std::fmt::Write as _;
use std::fs;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FIRST_YEAR: i32 = 1978;
const LAST_YEAR: i32 = 2021;

const VARIABLES: &[(&str, &str)] = &[
    ("00618", "Nitrate, water, filtered, milligrams per liter as nitrogen"),
    ("00613", "Nitrite, water, filtered, milligrams per liter as nitrogen"),
    ("00605", "Organic nitrogen, water, unfiltered, milligrams per liter"),
    ("00608", "Ammonia, water, filtered, milligrams per liter as nitrogen"),
    ("00607", "Organic nitrogen, water, filtered, milligrams per liter"),
    ("00666", "Phosphorus, water, filtered, milligrams per liter"),
    ("00667", "Phosphorus, suspended, milligrams per liter"),
    ("00660", "Orthophosphate, water, filtered, milligrams per liter as PO4"),
    ("00300", "Dissolved oxygen, water, unfiltered, milligrams per liter"),
    ("00400", "pH, water, unfiltered, field, standard units"),
    ("00095", "Specific conductance, water, unfiltered, microsiemens per centimeter at 25 degrees Celsius"),
    ("00600", "Total nitrogen, water, unfiltered, milligrams per liter"),
    ("00602", "Total nitrogen, water, filtered, milligrams per liter"),
    ("00625", "Ammonia plus organic nitrogen, water, unfiltered, milligrams per liter as nitrogen"),
    ("00623", "Ammonia plus organic nitrogen, water, filtered, milligrams per liter as nitrogen"),
    ("00631", "Nitrate plus nitrite, water, filtered, milligrams per liter as nitrogen"),
    ("00665", "Phosphorus, water, unfiltered, milligrams per liter"),
    ("00671", "Orthophosphate, water, filtered, milligrams per liter as phosphorus"),
    ("00010", "Temperature, water, degrees Celsius"),
    ("00061", "Discharge, instantaneous, cubic feet per second"),
    ("00900", "Hardness, water, milligrams per liter as calcium carbonate"),
    ("00915", "Calcium, water, filtered, milligrams per liter"),
    ("00925", "Magnesium, water, filtered, milligrams per liter"),
    ("00930", "Sodium, water, filtered, milligrams per liter"),
    ("00935", "Potassium, water, filtered, milligrams per liter"),
    ("00940", "Chloride, water, filtered, milligrams per liter"),
    ("00945", "Sulfate, water, filtered, milligrams per liter"),
    ("00950", "Fluoride, water, filtered, milligrams per liter"),
    ("00955", "Silica, water, filtered, milligrams per liter as SiO2"),
    ("01046", "Iron, water, filtered, micrograms per liter"),
    ("01056", "Manganese, water, filtered, micrograms per liter"),
    ("01090", "Zinc, water, filtered, micrograms per liter"),
    ("71900", "Mercury, water, unfiltered, micrograms per liter"),
    ("80154", "Suspended sediment concentration, milligrams per liter"),
];

const COMPOSITES: &[(&str, &[&str])] = &[
    ("00600", &["00625", "00618", "00613"]),
    ("00602", &["00623", "00618", "00613"]),
    ("00625", &["00605", "00608"]),
    ("00623", &["00607", "00608"]),
    ("00631", &["00618", "00613"]),
    ("00665", &["00666", "00667"]),
];

/// Lose one whole in-window year each.
const GAPPY: &[&str] = &[
    "00671", "00010", "00061", "00900", "00915", "00925", "00930", "00935", "00940", "00945", "00950", "00955", "01046",
];

/// Dense before 1980 and after 2019, sparse inside.
const SPARSE_IN_WINDOW: &[&str] = &["01056", "01090", "71900", "80154"];

fn index(code: &str) -> usize {
    VARIABLES.iter().position(|(c, _)| *c == code).unwrap()
}

fn in_window(year: i32) -> bool {
    (1980..=2019).contains(&year)
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/site.rdb").to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(19_800_101);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let years = (LAST_YEAR - FIRST_YEAR + 1) as usize;
    let months = years * 12;
    let nvar = VARIABLES.len();

    // three latent drivers: a yearly random walk plus monthly noise
    let mut latent = vec![[0.0f64; 3]; months];
    let mut level = [0.0f64; 3];
    for y in 0..years {
        for l in &mut level {
            *l += 0.6 * normal(&mut rng);
        }
        for m in 0..12 {
            let t = y * 12 + m;
            let season = (2.0 * std::f64::consts::PI * m as f64 / 12.0).sin();
            latent[t] = [
                level[0] + 0.3 * season + 0.2 * normal(&mut rng),
                level[1] + 0.2 * normal(&mut rng),
                level[2] + 0.3 * (rng.random::<f64>() - 0.5),
            ];
        }
    }

    let weights: Vec<[f64; 3]> = (0..nvar)
        .map(|_| [normal(&mut rng), normal(&mut rng), normal(&mut rng)].map(|w| 0.4 * w))
        .collect();
    let mut dense = vec![vec![0.0f64; nvar]; months];
    for t in 0..months {
        for j in 0..nvar {
            let signal: f64 = (0..3).map(|c| weights[j][c] * latent[t][c]).sum();
            dense[t][j] = 10.0 + signal + 0.15 * normal(&mut rng);
        }
        for (composite, parts) in COMPOSITES {
            dense[t][index(composite)] = parts.iter().map(|p| dense[t][index(p)]).sum();
        }
    }

    let mut observed: Vec<Vec<Option<f64>>> = dense
        .iter()
        .map(|row| row.iter().map(|v| Some(*v)).collect())
        .collect();
    let nitrate = index("00618");
    for t in 0..months {
        let year = FIRST_YEAR + (t / 12) as i32;
        for j in 0..nvar {
            if j != nitrate && rng.random::<f64>() < 0.05 {
                observed[t][j] = None;
            }
        }
        for code in SPARSE_IN_WINDOW {
            if in_window(year) && t % 6 != 0 {
                observed[t][index(code)] = None;
            }
        }
    }
    for (g, code) in GAPPY.iter().enumerate() {
        let year = 1982 + 2 * g;
        for m in 0..12 {
            observed[(year - FIRST_YEAR as usize) * 12 + m][index(code)] = None;
        }
    }
    // one missing nitrate date in each of 12 in-window years
    for k in 0..12usize {
        let year = 1981 + 3 * k;
        let month = (k * 5) % 12;
        observed[(year - FIRST_YEAR as usize) * 12 + month][nitrate] = None;
    }

    let mut rdb = String::new();
    rdb.push_str("# Synthetic water-quality record for pipeline testing\n");
    rdb.push_str("#\n# Parameters:\n");
    for (code, label) in VARIABLES {
        writeln!(rdb, "#  P{code} - {label}").unwrap();
    }
    rdb.push_str("#\n");
    let mut header = vec!["agency_cd", "site_no", "sample_dt", "sample_tm", "medium_cd"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(VARIABLES.iter().map(|(c, _)| format!("p{c}")));
    writeln!(rdb, "{}", header.join("\t")).unwrap();
    let mut format = vec!["5s", "15s", "10d", "5d", "3s"].into_iter().map(String::from).collect::<Vec<_>>();
    format.extend(VARIABLES.iter().map(|_| "12n".to_string()));
    writeln!(rdb, "{}", format.join("\t")).unwrap();

    let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
    for t in 0..months {
        let year = FIRST_YEAR + (t / 12) as i32;
        let date = NaiveDate::from_ymd_opt(year, (t % 12) as u32 + 1, 15).unwrap();
        let mut row = vec!["USGS".to_string(), "01000000".into(), date.to_string(), "10:30".into(), "WS".into()];
        row.extend(observed[t].iter().map(|v| cell(*v)));
        writeln!(rdb, "{}", row.join("\t")).unwrap();
    }
    // quality-assurance replicates on their own dates
    for k in 0..6 {
        let date = NaiveDate::from_ymd_opt(1984 + 5 * k, 6, 3).unwrap();
        let mut row = vec!["USGS".to_string(), "01000000".into(), date.to_string(), "11:00".into(), "OAQ".into()];
        row.extend((0..nvar).map(|j| cell(Some(9.5 + 0.01 * j as f64))));
        writeln!(rdb, "{}", row.join("\t")).unwrap();
    }

    fs::write(&out, rdb).expect("write fixture");
    eprintln!("wrote {out}");
}
