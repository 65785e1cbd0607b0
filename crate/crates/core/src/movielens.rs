//! MovieLens 1M ingestion: `::`-separated ratings and users files, turned
//! into an hourly trace where every rating is one request from its own user.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::ContextVector;
use crate::env::{ServiceAssignment, TraceModel, TraceRequest};
use crate::error::{Error, Result};
use crate::types::FileId;

/// The seven age categories in increasing order.
pub const AGE_CODES: [u8; 7] = [1, 18, 25, 35, 45, 50, 56];

pub const SLOT_SECONDS: u64 = 3600;
pub const HOURS_PER_YEAR: u64 = 8760;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub user_id: u32,
    pub movie_id: u32,
    pub rating: u8,
    pub timestamp: u64,
}

impl RatingEvent {
    pub fn to_line(&self) -> String {
        format!(
            "{}::{}::{}::{}",
            self.user_id, self.movie_id, self.rating, self.timestamp
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: u32,
    pub gender: Gender,
    pub age_code: u8,
    /// Kept verbatim; not used for context.
    pub occupation: String,
    pub zip: String,
}

impl UserProfile {
    pub fn to_line(&self) -> String {
        let g = match self.gender {
            Gender::F => "F",
            Gender::M => "M",
        };
        format!(
            "{}::{}::{}::{}::{}",
            self.user_id, g, self.age_code, self.occupation, self.zip
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ParseMode {
    /// Abort on the first malformed line.
    #[default]
    Strict,
    /// Skip malformed lines and record them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub events: Vec<RatingEvent>,
    pub profiles: BTreeMap<u32, UserProfile>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_event(line: &str) -> Result<RatingEvent, String> {
    let parts: Vec<&str> = line.split("::").collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 fields, found {}", parts.len()));
    }
    let user_id = positive(parts[0], "user id")?;
    let movie_id = positive(parts[1], "movie id")?;
    let rating: u8 = parts[2]
        .parse()
        .map_err(|_| format!("bad rating {:?}", parts[2]))?;
    if !(1..=5).contains(&rating) {
        return Err(format!("rating {rating} outside 1..5"));
    }
    let timestamp = parts[3]
        .parse()
        .map_err(|_| format!("bad timestamp {:?}", parts[3]))?;
    Ok(RatingEvent {
        user_id,
        movie_id,
        rating,
        timestamp,
    })
}

pub fn parse_profile(line: &str) -> Result<UserProfile, String> {
    let parts: Vec<&str> = line.split("::").collect();
    if parts.len() != 5 {
        return Err(format!("expected 5 fields, found {}", parts.len()));
    }
    let user_id = positive(parts[0], "user id")?;
    let gender = match parts[1] {
        "F" => Gender::F,
        "M" => Gender::M,
        g => return Err(format!("unknown gender {g:?}")),
    };
    let age_code: u8 = parts[2]
        .parse()
        .map_err(|_| format!("bad age code {:?}", parts[2]))?;
    if !AGE_CODES.contains(&age_code) {
        return Err(format!("unknown age code {age_code}"));
    }
    Ok(UserProfile {
        user_id,
        gender,
        age_code,
        occupation: parts[3].to_string(),
        zip: parts[4].to_string(),
    })
}

fn positive(s: &str, what: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("bad {what} {s:?}")),
    }
}

/// Lines of a file, decoded as UTF-8 where possible and Latin-1 otherwise.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    };
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

fn parse_file<T>(
    path: &Path,
    mode: ParseMode,
    diagnostics: &mut Vec<Diagnostic>,
    parse_line: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(v) => out.push(v),
            Err(message) => {
                if mode == ParseMode::Strict {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message,
                    });
                }
                diagnostics.push(Diagnostic {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                });
            }
        }
    }
    Ok(out)
}

pub fn parse(ratings: &Path, users: &Path, mode: ParseMode) -> Result<Dataset> {
    let mut diagnostics = Vec::new();
    let events = parse_file(ratings, mode, &mut diagnostics, parse_event)?;
    let mut profiles = BTreeMap::new();
    for p in parse_file(users, mode, &mut diagnostics, parse_profile)? {
        if profiles.contains_key(&p.user_id) {
            let message = format!("duplicate user {}", p.user_id);
            if mode == ParseMode::Strict {
                return Err(Error::Parse {
                    path: users.to_path_buf(),
                    line: 0,
                    message,
                });
            }
            diagnostics.push(Diagnostic {
                path: users.to_path_buf(),
                line: 0,
                message,
            });
            continue;
        }
        profiles.insert(p.user_id, p);
    }
    Ok(Dataset {
        events,
        profiles,
        diagnostics,
    })
}

/// Gender to `{0, 1}` and age category to its rank over six.
pub fn encode_context(profile: &UserProfile) -> Result<ContextVector> {
    let rank = AGE_CODES
        .iter()
        .position(|&a| a == profile.age_code)
        .ok_or_else(|| Error::InvalidInput(format!("unknown age code {}", profile.age_code)))?;
    let g = match profile.gender {
        Gender::F => 0.0,
        Gender::M => 1.0,
    };
    ContextVector::new(vec![g, rank as f64 / 6.0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBuild {
    pub trace: TraceModel,
    /// Earliest timestamp; slot 1 starts here.
    pub t0: u64,
    pub total_events: usize,
    pub retained_events: usize,
}

impl TraceBuild {
    pub fn retained_fraction(&self) -> f64 {
        if self.total_events == 0 {
            0.0
        } else {
            self.retained_events as f64 / self.total_events as f64
        }
    }
}

/// Slots `[t0 + k*slot, t0 + (k+1)*slot)` for `k < horizon`; the library
/// spans movie ids `1..=max id`.
pub fn build_trace(
    events: &[RatingEvent],
    profiles: &BTreeMap<u32, UserProfile>,
    slot_seconds: u64,
    horizon: u64,
) -> Result<TraceBuild> {
    if slot_seconds == 0 || horizon == 0 {
        return Err(Error::Config(
            "slot length and horizon must be positive".into(),
        ));
    }
    let t0 = events
        .iter()
        .map(|e| e.timestamp)
        .min()
        .ok_or_else(|| Error::InvalidInput("no rating events".into()))?;
    let library_size = events.iter().map(|e| e.movie_id).max().unwrap_or(0) as usize;
    let end = t0.saturating_add(slot_seconds.saturating_mul(horizon));
    let mut contexts = BTreeMap::new();
    for (id, p) in profiles {
        contexts.insert(*id, encode_context(p)?);
    }

    let mut kept: Vec<&RatingEvent> = events.iter().filter(|e| e.timestamp < end).collect();
    kept.sort_by_key(|e| e.timestamp);
    let mut slots = vec![Vec::new(); horizon as usize];
    for e in &kept {
        let context = contexts.get(&e.user_id).ok_or_else(|| {
            Error::InvalidInput(format!("rating by user {} without a profile", e.user_id))
        })?;
        let offset = e.timestamp - t0;
        let k = offset / slot_seconds;
        slots[k as usize].push(TraceRequest {
            user_id: e.user_id,
            context: context.clone(),
            file: FileId(e.movie_id - 1),
            rating: e.rating,
            arrival: (offset % slot_seconds) as f64 / slot_seconds as f64,
        });
    }
    Ok(TraceBuild {
        trace: TraceModel {
            library_size,
            slots,
        },
        t0,
        total_events: events.len(),
        retained_events: kept.len(),
    })
}

pub const CSV_HEADER: &str = "slot,user_ctx_0,user_ctx_1,service_type,movie_id,rating";

/// Normalized trace, one request per row, slots numbered from 1.
pub fn export_csv(
    trace: &TraceModel,
    services: ServiceAssignment,
    out: &mut impl Write,
) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "{CSV_HEADER}").unwrap();
    for (k, slot) in trace.slots.iter().enumerate() {
        for r in slot {
            let x = r.context.coords();
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                k + 1,
                x[0],
                x.get(1).copied().unwrap_or(0.0),
                services.service(r.user_id).0,
                r.file.0 + 1,
                r.rating
            )
            .unwrap();
        }
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| Error::io("<trace export>", e))
}

/// Size of a generated MovieLens-format dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub users: u32,
    pub movies: u32,
    pub ratings: usize,
    /// Span of the timestamps in days.
    pub days: u64,
}

/// Writes `ratings.dat` and `users.dat` with context-dependent taste:
/// each (gender, age) group prefers its own slice of the catalogue.
pub fn write_fixture(dir: &Path, spec: FixtureSpec, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = String::new();
    let mut groups = Vec::with_capacity(spec.users as usize);
    for id in 1..=spec.users {
        let g = rng.gen_range(0..2usize);
        let a = rng.gen_range(0..AGE_CODES.len());
        groups.push(g * AGE_CODES.len() + a);
        writeln!(
            users,
            "{id}::{}::{}::{}::{:05}",
            ["F", "M"][g],
            AGE_CODES[a],
            rng.gen_range(0..21),
            rng.gen_range(0..100_000)
        )
        .unwrap();
    }
    let n_groups = 2 * AGE_CODES.len();
    let t0: u64 = 956_703_932;
    let span = spec.days * 86_400;
    let mut events: Vec<RatingEvent> = (0..spec.ratings)
        .map(|_| {
            let user_id = rng.gen_range(1..=spec.users);
            let group = groups[(user_id - 1) as usize];
            // Half the requests come from the group's favourites, the rest
            // from a global head of popular titles.
            let movie_id = if rng.gen::<f64>() < 0.5 {
                let slice = (spec.movies as usize / n_groups).max(1);
                let offset = (rng.gen::<f64>().powi(2) * slice as f64) as u32;
                (group * slice) as u32 % spec.movies + offset.min(slice as u32 - 1) + 1
            } else {
                (rng.gen::<f64>().powi(3) * spec.movies as f64) as u32 + 1
            };
            // Activity decays over time.
            let timestamp = t0 + (rng.gen::<f64>().powf(1.6) * span as f64) as u64;
            RatingEvent {
                user_id,
                movie_id: movie_id.min(spec.movies),
                rating: rng.gen_range(1..=5),
                timestamp,
            }
        })
        .collect();
    events.sort_by_key(|e| (e.user_id, e.timestamp));
    let mut ratings = String::new();
    for e in &events {
        writeln!(ratings, "{}", e.to_line()).unwrap();
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [("ratings.dat", ratings), ("users.dat", users)] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(gender: Gender, age_code: u8) -> UserProfile {
        UserProfile {
            user_id: 1,
            gender,
            age_code,
            occupation: "10".into(),
            zip: "48067".into(),
        }
    }

    #[test]
    fn parses_rating_line() {
        assert_eq!(
            parse_event("1::1193::5::978300760").unwrap(),
            RatingEvent {
                user_id: 1,
                movie_id: 1193,
                rating: 5,
                timestamp: 978300760
            }
        );
        assert!(parse_event("1::1193::6::978300760").is_err());
        assert!(parse_event("1::1193::5").is_err());
        assert!(parse_event("0::1193::5::1").is_err());
    }

    #[test]
    fn parses_profile_line() {
        let p = parse_profile("1::F::1::10::48067").unwrap();
        assert_eq!(p, profile(Gender::F, 1));
        assert!(parse_profile("1::X::1::10::48067").is_err());
        assert!(parse_profile("1::F::2::10::48067").is_err());
    }

    #[test]
    fn context_encoding() {
        let x = |g, a| encode_context(&profile(g, a)).unwrap().coords().to_vec();
        assert_eq!(x(Gender::F, 1), vec![0.0, 0.0]);
        assert_eq!(x(Gender::M, 56), vec![1.0, 1.0]);
        assert_eq!(x(Gender::F, 35), vec![0.0, 0.5]);
        assert!(encode_context(&profile(Gender::F, 2)).is_err());
    }

    #[test]
    fn ages_map_in_order() {
        let ranks: Vec<f64> = AGE_CODES
            .iter()
            .map(|&a| encode_context(&profile(Gender::M, a)).unwrap().coords()[1])
            .collect();
        assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    }

    fn ev(user_id: u32, movie_id: u32, timestamp: u64) -> RatingEvent {
        RatingEvent {
            user_id,
            movie_id,
            rating: 3,
            timestamp,
        }
    }

    fn profiles() -> BTreeMap<u32, UserProfile> {
        (1..=3)
            .map(|id| {
                let mut p = profile(Gender::M, 25);
                p.user_id = id;
                (id, p)
            })
            .collect()
    }

    #[test]
    fn same_slot_within_the_hour() {
        let events = [ev(1, 5, 1000), ev(2, 7, 1000 + 1800)];
        let b = build_trace(&events, &profiles(), SLOT_SECONDS, 3).unwrap();
        assert_eq!(b.trace.slots[0].len(), 2);
        assert_eq!(b.trace.slots[0][1].file, FileId(6));
        assert_eq!(b.trace.slots[0][1].arrival, 0.5);
        assert_eq!(b.trace.library_size, 7);
    }

    #[test]
    fn window_is_half_open() {
        let t0 = 50;
        let events = [
            ev(1, 1, t0),
            ev(2, 1, t0 + 8760 * 3600),
            ev(3, 1, t0 + 8760 * 3600 - 1),
        ];
        let b = build_trace(&events, &profiles(), SLOT_SECONDS, HOURS_PER_YEAR).unwrap();
        assert_eq!(b.retained_events, 2);
        assert_eq!(b.trace.slots.len(), 8760);
        assert_eq!(b.trace.slots[8759].len(), 1);
        assert!((b.retained_fraction() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_profile_is_an_error() {
        assert!(build_trace(&[ev(9, 1, 0)], &profiles(), SLOT_SECONDS, 2).is_err());
        assert!(build_trace(&[], &profiles(), SLOT_SECONDS, 2).is_err());
    }

    #[test]
    fn export_columns() {
        let b = build_trace(&[ev(1, 4, 0)], &profiles(), SLOT_SECONDS, 1).unwrap();
        let mut out = Vec::new();
        export_csv(&b.trace, ServiceAssignment::NONE, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            format!("{CSV_HEADER}\n1,1,0.3333333333333333,2,4,3\n")
        );
    }
}
