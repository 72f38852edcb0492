//! Gebit bookkeeping for emerge mode: which gebits exist at each recorded
//! step, which of them continue an earlier one, and how long they live.

use std::collections::BTreeMap;

use gebit_core::Gebit;

/// `|a ∩ b| / |a ∪ b|` for sorted node lists.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedGebit {
    pub id: usize,
    pub nodes: Vec<usize>,
}

/// Matching of this step's gebits against the previous step's.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub gebits: Vec<TrackedGebit>,
    pub born: usize,
    pub persisted: usize,
    pub decayed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lifetime {
    pub id: usize,
    pub first_step: usize,
    pub last_step: usize,
    /// Still present at the final recorded step.
    pub alive: bool,
}

impl Lifetime {
    pub fn span(&self) -> usize {
        self.last_step - self.first_step
    }
}

/// Carries gebit identities across recorded steps. A gebit continues an
/// earlier one when their node sets overlap with Jaccard index at least
/// `threshold`; pairs are matched greedily from the largest overlap down, so
/// each identity is inherited at most once.
#[derive(Debug, Clone)]
pub struct GebitTracker {
    threshold: f64,
    previous: Vec<TrackedGebit>,
    next_id: usize,
    lifetimes: BTreeMap<usize, Lifetime>,
}

impl GebitTracker {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            previous: Vec::new(),
            next_id: 0,
            lifetimes: BTreeMap::new(),
        }
    }

    pub fn observe(&mut self, step: usize, gebits: &[Gebit]) -> Transition {
        let mut candidates = Vec::new();
        for (c, current) in gebits.iter().enumerate() {
            for (p, prev) in self.previous.iter().enumerate() {
                let overlap = jaccard(current.nodes(), &prev.nodes);
                if overlap >= self.threshold {
                    candidates.push((overlap, c, p));
                }
            }
        }
        // largest overlap first; index order breaks ties deterministically
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut inherited: Vec<Option<usize>> = vec![None; gebits.len()];
        let mut taken = vec![false; self.previous.len()];
        for (_, c, p) in candidates {
            if inherited[c].is_none() && !taken[p] {
                inherited[c] = Some(self.previous[p].id);
                taken[p] = true;
            }
        }

        let mut tracked = Vec::with_capacity(gebits.len());
        let mut born = 0;
        for (gebit, parent) in gebits.iter().zip(inherited) {
            let id = match parent {
                Some(id) => id,
                None => {
                    born += 1;
                    let id = self.next_id;
                    self.next_id += 1;
                    self.lifetimes.insert(
                        id,
                        Lifetime {
                            id,
                            first_step: step,
                            last_step: step,
                            alive: true,
                        },
                    );
                    id
                }
            };
            self.lifetimes.get_mut(&id).expect("registered at birth").last_step = step;
            tracked.push(TrackedGebit {
                id,
                nodes: gebit.nodes().to_vec(),
            });
        }
        let persisted = taken.iter().filter(|&&t| t).count();
        let decayed = taken.len() - persisted;
        for (prev, t) in self.previous.iter().zip(&taken) {
            if !t {
                self.lifetimes.get_mut(&prev.id).expect("registered at birth").alive = false;
            }
        }
        self.previous = tracked.clone();
        Transition {
            gebits: tracked,
            born,
            persisted,
            decayed,
        }
    }

    pub fn lifetimes(&self) -> Vec<Lifetime> {
        self.lifetimes.values().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub s_min: usize,
    pub exponent: f64,
    pub samples: usize,
}

/// Discrete power-law exponent for sizes `>= s_min` using the usual
/// continuity-corrected estimator `1 + n / sum ln(s / (s_min - 1/2))`.
/// `None` with fewer than two samples in the tail.
pub fn power_law_exponent(sizes: &[usize], s_min: usize) -> Option<PowerLaw> {
    assert!(s_min >= 1, "s_min must be positive");
    let tail: Vec<f64> = sizes.iter().filter(|&&s| s >= s_min).map(|&s| s as f64).collect();
    if tail.len() < 2 {
        return None;
    }
    let shift = s_min as f64 - 0.5;
    let sum: f64 = tail.iter().map(|s| (s / shift).ln()).sum();
    Some(PowerLaw {
        s_min,
        exponent: 1.0 + tail.len() as f64 / sum,
        samples: tail.len(),
    })
}

/// Counts per size, ascending.
pub fn size_histogram(sizes: impl IntoIterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in sizes {
        *hist.entry(s).or_insert(0) += 1;
    }
    hist
}
