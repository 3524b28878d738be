//! Rating matrices for the two domains, normalization and train/validation/test splits.

mod split;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::kg::{for_each_line, split_fields};

pub use split::{split_cold_start, split_standard, DatasetSplit, DomainSplit, SplitMode};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;
/// Raw ratings at or above this count as positive for F1.
pub const POSITIVE_RATING: u8 = 4;

/// Maps a 1–5 rating onto `[0, 1]` via `(r - 1) / 4`.
pub fn normalize_rating(r: u8) -> Result<f64> {
    if !(MIN_RATING..=MAX_RATING).contains(&r) {
        return Err(Error::Data(format!("rating {r} outside {MIN_RATING}..={MAX_RATING}")));
    }
    Ok(f64::from(r - MIN_RATING) / f64::from(MAX_RATING - MIN_RATING))
}

/// Inverse of [`normalize_rating`], without rounding.
pub fn denormalize_rating(value: f64) -> f64 {
    f64::from(MIN_RATING) + f64::from(MAX_RATING - MIN_RATING) * value
}

/// String ↔ dense id dictionary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    /// Raw ordinal rating, 1–5.
    pub value: u8,
}

impl Rating {
    /// Target on the unit interval; ratings are validated on construction.
    #[inline]
    pub fn target(&self) -> f64 {
        f64::from(self.value - MIN_RATING) / f64::from(MAX_RATING - MIN_RATING)
    }
}

/// Sparse user–item ratings of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub domain: Domain,
    pub n_users: usize,
    pub items: Vocab,
    pub records: Vec<Rating>,
}

impl InteractionMatrix {
    pub fn new(domain: Domain, n_users: usize, items: Vocab, records: Vec<Rating>) -> Result<Self> {
        let n_items = items.len();
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if r.user >= n_users || r.item >= n_items {
                return Err(Error::Lookup(format!("rating {r:?} out of range ({n_users} users, {n_items} items)")));
            }
            normalize_rating(r.value)?;
            if !seen.insert((r.user, r.item)) {
                return Err(Error::Data(format!("duplicate rating for user {} item {}", r.user, r.item)));
            }
        }
        Ok(Self {
            domain,
            n_users,
            items,
            records,
        })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes `user<TAB>item<TAB>rating` lines.
    pub fn write(&self, path: &Path, users: &Vocab) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            writeln!(w, "{}\t{}\t{}", users.name(r.user), self.items.name(r.item), r.value)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a `user item rating` file for one domain.
///
/// Users are interned into the shared `users` dictionary so the same user
/// string receives the same id in both domains. The returned matrix's
/// `n_users` reflects the dictionary size at load time; [`RatingData::load`]
/// resynchronizes it after both domains are read. Duplicate `(user, item)`
/// pairs keep the last rating; their count is returned alongside.
pub fn load_ratings(path: &Path, domain: Domain, users: &mut Vocab) -> Result<(InteractionMatrix, usize)> {
    let mut items = Vocab::new();
    let mut records: Vec<Rating> = Vec::new();
    let mut position: HashMap<(usize, usize), usize> = HashMap::new();
    let mut duplicates = 0;
    for_each_line(path, |line_no, line| {
        let [u, i, r] = split_fields::<3>(line, path, line_no)?;
        let value: u8 = r.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("rating {r:?} is not an integer"),
        })?;
        if !(MIN_RATING..=MAX_RATING).contains(&value) {
            return Err(Error::Data(format!(
                "{}:{line_no}: rating {value} outside {MIN_RATING}..={MAX_RATING}",
                path.display()
            )));
        }
        let user = users.intern(u);
        let item = items.intern(i);
        let rating = Rating { user, item, value };
        match position.get(&(user, item)) {
            Some(&at) => {
                records[at] = rating;
                duplicates += 1;
            }
            None => {
                position.insert((user, item), records.len());
                records.push(rating);
            }
        }
        Ok(())
    })?;
    if duplicates > 0 {
        log::warn!("{}: {duplicates} duplicate ratings, kept the last of each", path.display());
    }
    Ok((
        InteractionMatrix {
            domain,
            n_users: users.len(),
            items,
            records,
        },
        duplicates,
    ))
}

/// Both domains' ratings over one shared user dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingData {
    pub users: Vocab,
    pub source: InteractionMatrix,
    pub target: InteractionMatrix,
}

impl RatingData {
    pub fn load(source: &Path, target: &Path) -> Result<(Self, usize)> {
        let mut users = Vocab::new();
        let (mut s, ws) = load_ratings(source, Domain::Source, &mut users)?;
        let (mut t, wt) = load_ratings(target, Domain::Target, &mut users)?;
        s.n_users = users.len();
        t.n_users = users.len();
        Ok((
            Self {
                users,
                source: s,
                target: t,
            },
            ws + wt,
        ))
    }

    pub fn matrix(&self, d: Domain) -> &InteractionMatrix {
        match d {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }
}
