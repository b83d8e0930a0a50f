//! Past alerts and their outcomes, indexed for "what was known at time t" queries.
//!
//! Every query takes an instant `t` and only sees alerts created strictly before
//! `t`; outcome-derived counts additionally require the outcome to have been
//! resolved strictly before `t`.

use std::collections::HashMap;

use chrono::{DateTime, Utc};

use super::geo::{hav_threshold, Prepared};
use super::FeatureWindows;
use crate::domain::{Alert, OutcomeCode, OutcomeRecord, Platform};

const DAY: i64 = 86_400;
const NEVER: i64 = i64::MAX;
/// Metres per degree of latitude on the mean sphere.
const M_PER_DEG: f64 = 111_194.93;

#[derive(Debug, Clone, Copy)]
struct Entry {
    created: i64,
    point: Prepared,
    platform: Platform,
    /// Instant the referral became known, `NEVER` if not a referral.
    referral_known: i64,
    positive_known: i64,
}

/// Entries sorted by creation time with a "known at" instant and an integer weight.
#[derive(Debug, Clone, Default)]
pub struct KnownSeries {
    created: Vec<i64>,
    known: Vec<i64>,
    weight: Vec<i64>,
    prefix_n: Vec<u64>,
    prefix_w: Vec<i64>,
    max_delay: i64,
}

impl KnownSeries {
    /// `items` must be sorted by creation time.
    fn from_sorted(items: impl IntoIterator<Item = (i64, i64, i64)>) -> Self {
        let mut s = KnownSeries { prefix_n: vec![0], prefix_w: vec![0], ..Default::default() };
        for (c, k, w) in items {
            s.created.push(c);
            s.known.push(k);
            s.weight.push(w);
            s.prefix_n.push(s.prefix_n.last().unwrap() + 1);
            s.prefix_w.push(s.prefix_w.last().unwrap() + w);
            s.max_delay = s.max_delay.max(k - c);
        }
        s
    }

    fn lower(&self, t: i64) -> usize {
        self.created.partition_point(|&c| c < t)
    }

    /// Count and weight sum of entries created in `[t - span, t)` and known before `t`.
    pub fn query(&self, t: i64, span: i64) -> (u64, i64) {
        let lo = self.lower(t.saturating_sub(span));
        let hi = self.lower(t);
        let mut n = self.prefix_n[hi] - self.prefix_n[lo];
        let mut w = self.prefix_w[hi] - self.prefix_w[lo];
        let scan = lo.max(self.lower(t.saturating_sub(self.max_delay)));
        for i in scan..hi {
            if self.known[i] >= t {
                n -= 1;
                w -= self.weight[i];
            }
        }
        (n, w)
    }

    /// Latest creation or known instant consumed by a query at `t`.
    pub fn latest_before(&self, t: i64, span: i64) -> Option<i64> {
        let lo = self.lower(t.saturating_sub(span));
        let hi = self.lower(t);
        if lo == hi {
            return None;
        }
        let mut latest = self.created[hi - 1];
        let scan = lo.max(self.lower(t.saturating_sub(self.max_delay)));
        for i in scan..hi {
            if self.known[i] < t {
                latest = latest.max(self.known[i]);
            }
        }
        Some(latest)
    }
}

#[derive(Debug, Clone, Default)]
struct LspSeries {
    alerts: KnownSeries,
    /// Weighted by response time in seconds.
    referrals: KnownSeries,
    positives: KnownSeries,
}

/// Spatio-temporal counts for one query; indices are `[x][y]` and `[z][x][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCounts {
    pub alerts: Vec<Vec<u64>>,
    pub referrals: Vec<Vec<u64>>,
    pub positives: Vec<Vec<u64>>,
    pub by_platform: Vec<Vec<Vec<u64>>>,
    pub duplicate: bool,
    /// Latest history instant that fed any count.
    pub latest: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCounts {
    pub alerts: u64,
    pub referrals: u64,
    pub positives: u64,
    pub by_platform: [u64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LspWindow {
    pub alerts: u64,
    pub referrals: u64,
    pub positives: u64,
    /// Summed response time of the counted referrals, seconds.
    pub response_secs: i64,
}

#[derive(Debug, Clone)]
pub struct HistoryIndex {
    windows: FeatureWindows,
    duplicate_m: f64,
    duplicate_days: i64,
    cell_lat: f64,
    cell_lon: f64,
    cells: HashMap<(i64, i64), Vec<Entry>>,
    global_alerts: KnownSeries,
    global_referrals: KnownSeries,
    global_positives: KnownSeries,
    platform_alerts: Vec<KnownSeries>,
    lsp: HashMap<String, LspSeries>,
    radius_hav: Vec<f64>,
    duplicate_hav: f64,
}

impl HistoryIndex {
    /// `outcomes[i]` is the (first) outcome of `alerts[i]`, if any.
    pub fn new(
        alerts: &[Alert],
        outcomes: &[Option<&OutcomeRecord>],
        windows: &FeatureWindows,
        duplicate_m: f64,
        duplicate_days: i64,
    ) -> Self {
        assert_eq!(alerts.len(), outcomes.len());
        let mut order: Vec<usize> = (0..alerts.len()).collect();
        order.sort_by(|&a, &b| {
            alerts[a].created_at.cmp(&alerts[b].created_at).then_with(|| alerts[a].id.cmp(&alerts[b].id))
        });

        let max_lat = alerts.iter().map(|a| a.latitude.abs()).fold(0.0, f64::max);
        let reach = windows.max_distance().max(duplicate_m);
        let cell_lat = reach / M_PER_DEG * 1.01;
        let cell_lon = cell_lat / max_lat.to_radians().cos().max(0.01);

        let entries: Vec<(usize, Entry)> = order
            .iter()
            .map(|&i| {
                let a = &alerts[i];
                let (referral_known, positive_known) = match outcomes[i] {
                    Some(o) => {
                        let t = o.resolved_at.timestamp();
                        let labels = o.outcome_code.labels();
                        (
                            if labels.referral { t } else { NEVER },
                            if o.outcome_code == OutcomeCode::PersonFound { t } else { NEVER },
                        )
                    }
                    None => (NEVER, NEVER),
                };
                let e = Entry {
                    created: a.created_at.timestamp(),
                    point: Prepared::new(a.latitude, a.longitude),
                    platform: a.platform,
                    referral_known,
                    positive_known,
                };
                (i, e)
            })
            .collect();

        let mut cells: HashMap<(i64, i64), Vec<Entry>> = HashMap::new();
        for (_, e) in &entries {
            cells.entry(cell_key(e.point.lat, e.point.lon, cell_lat, cell_lon)).or_default().push(*e);
        }

        let series = |known: fn(&Entry) -> Option<(i64, i64)>, filter: &dyn Fn(usize, &Entry) -> bool| {
            KnownSeries::from_sorted(
                entries
                    .iter()
                    .filter(|(i, e)| filter(*i, e))
                    .filter_map(|(_, e)| known(e).map(|(k, w)| (e.created, k, w))),
            )
        };
        let all = |_: usize, _: &Entry| true;
        let alert_known = |e: &Entry| Some((e.created, 0));
        let referral =
            |e: &Entry| (e.referral_known != NEVER).then(|| (e.referral_known, e.referral_known - e.created));
        let positive = |e: &Entry| (e.positive_known != NEVER).then_some((e.positive_known, 0));

        let global_alerts = series(alert_known, &all);
        let global_referrals = series(referral, &all);
        let global_positives = series(positive, &all);
        let platform_alerts =
            Platform::ALL.iter().map(|&p| series(alert_known, &move |_, e: &Entry| e.platform == p)).collect();

        let mut by_lsp: HashMap<&str, Vec<usize>> = HashMap::new();
        for (pos, (i, _)) in entries.iter().enumerate() {
            by_lsp.entry(alerts[*i].lsp_id.as_str()).or_default().push(pos);
        }
        let lsp = by_lsp
            .into_iter()
            .map(|(id, positions)| {
                let sub = |known: fn(&Entry) -> Option<(i64, i64)>| {
                    KnownSeries::from_sorted(positions.iter().filter_map(|&p| {
                        let e = &entries[p].1;
                        known(e).map(|(k, w)| (e.created, k, w))
                    }))
                };
                (
                    id.to_string(),
                    LspSeries { alerts: sub(alert_known), referrals: sub(referral), positives: sub(positive) },
                )
            })
            .collect();

        let radius_hav = windows.distances_m.iter().map(|&x| hav_threshold(x)).collect();
        HistoryIndex {
            windows: windows.clone(),
            duplicate_m,
            duplicate_days,
            cell_lat,
            cell_lon,
            cells,
            global_alerts,
            global_referrals,
            global_positives,
            platform_alerts,
            lsp,
            radius_hav,
            duplicate_hav: hav_threshold(duplicate_m),
        }
    }

    pub fn windows(&self) -> &FeatureWindows {
        &self.windows
    }

    /// Counts of prior alerts, referrals and positives within each distance and day window.
    pub fn spatial(&self, lat: f64, lon: f64, at: DateTime<Utc>) -> SpatialCounts {
        let t = at.timestamp();
        let nx = self.windows.distances_m.len();
        let ny = self.windows.day_windows.len();
        let spans: Vec<i64> = self.windows.day_windows.iter().map(|&d| d as i64 * DAY).collect();
        let max_span = spans.last().copied().unwrap_or(0).max(self.duplicate_days * DAY);
        let max_hav = self.radius_hav.last().copied().unwrap_or(0.0).max(self.duplicate_hav);
        let q = Prepared::new(lat, lon);

        let zero = vec![vec![0u64; ny]; nx];
        let mut alerts = zero.clone();
        let mut referrals = zero.clone();
        let mut positives = zero.clone();
        let mut by_platform = vec![zero.clone(); Platform::ALL.len()];
        let mut duplicate = false;
        let mut latest: Option<i64> = None;

        let (ci, cj) = cell_key(lat, lon, self.cell_lat, self.cell_lon);
        let reach_lon =
            self.windows.max_distance().max(self.duplicate_m) / M_PER_DEG / lat.to_radians().cos().max(1e-9) * 1.01;
        let dj = (reach_lon / self.cell_lon).ceil() as i64;
        let visit = |cell: &Vec<Entry>,
                     alerts: &mut Vec<Vec<u64>>,
                     referrals: &mut Vec<Vec<u64>>,
                     positives: &mut Vec<Vec<u64>>,
                     by_platform: &mut Vec<Vec<Vec<u64>>>,
                     duplicate: &mut bool,
                     latest: &mut Option<i64>| {
            let lo = cell.partition_point(|e| e.created < t - max_span);
            let hi = cell.partition_point(|e| e.created < t);
            for e in &cell[lo..hi] {
                let h = q.hav(&e.point);
                if h > max_hav {
                    continue;
                }
                let age = t - e.created;
                if h <= self.duplicate_hav && age <= self.duplicate_days * DAY {
                    *duplicate = true;
                }
                let Some(xb) = self.radius_hav.iter().position(|&r| h <= r) else {
                    continue;
                };
                let Some(yb) = spans.iter().position(|&s| age <= s) else {
                    continue;
                };
                alerts[xb][yb] += 1;
                by_platform[e.platform.index()][xb][yb] += 1;
                let mut seen = e.created;
                if e.referral_known < t {
                    referrals[xb][yb] += 1;
                    seen = seen.max(e.referral_known);
                }
                if e.positive_known < t {
                    positives[xb][yb] += 1;
                    seen = seen.max(e.positive_known);
                }
                *latest = Some(latest.map_or(seen, |l| l.max(seen)));
            }
        };
        if dj as usize > self.cells.len() {
            for cell in self.cells.values() {
                visit(cell, &mut alerts, &mut referrals, &mut positives, &mut by_platform, &mut duplicate, &mut latest);
            }
        } else {
            for i in ci - 1..=ci + 1 {
                for j in cj - dj..=cj + dj {
                    if let Some(cell) = self.cells.get(&(i, j)) {
                        visit(
                            cell,
                            &mut alerts,
                            &mut referrals,
                            &mut positives,
                            &mut by_platform,
                            &mut duplicate,
                            &mut latest,
                        );
                    }
                }
            }
        }

        for grid in [&mut alerts, &mut referrals, &mut positives].into_iter().chain(by_platform.iter_mut()) {
            cumulate(grid);
        }
        SpatialCounts { alerts, referrals, positives, by_platform, duplicate, latest }
    }

    /// Corpus-wide counts over the last `days` days.
    pub fn global(&self, at: DateTime<Utc>, days: u32) -> WindowCounts {
        let (t, span) = (at.timestamp(), days as i64 * DAY);
        let mut by_platform = [0; 3];
        for (k, s) in self.platform_alerts.iter().enumerate() {
            by_platform[k] = s.query(t, span).0;
        }
        WindowCounts {
            alerts: self.global_alerts.query(t, span).0,
            referrals: self.global_referrals.query(t, span).0,
            positives: self.global_positives.query(t, span).0,
            by_platform,
        }
    }

    pub fn global_latest(&self, at: DateTime<Utc>, days: u32) -> Option<i64> {
        let (t, span) = (at.timestamp(), days as i64 * DAY);
        [&self.global_alerts, &self.global_referrals, &self.global_positives]
            .into_iter()
            .filter_map(|s| s.latest_before(t, span))
            .max()
    }

    /// Per-LSP counts; `None` when the provider has no history at all.
    pub fn lsp(&self, lsp_id: &str, at: DateTime<Utc>, days: u32) -> Option<(LspWindow, Option<i64>)> {
        let s = self.lsp.get(lsp_id)?;
        let (t, span) = (at.timestamp(), days as i64 * DAY);
        let (referrals, response_secs) = s.referrals.query(t, span);
        let w = LspWindow {
            alerts: s.alerts.query(t, span).0,
            referrals,
            positives: s.positives.query(t, span).0,
            response_secs,
        };
        let latest = [&s.alerts, &s.referrals, &s.positives].into_iter().filter_map(|x| x.latest_before(t, span)).max();
        Some((w, latest))
    }
}

fn cell_key(lat: f64, lon: f64, cell_lat: f64, cell_lon: f64) -> (i64, i64) {
    ((lat / cell_lat).floor() as i64, (lon / cell_lon).floor() as i64)
}

/// In-place 2D prefix sum: `g[x][y]` becomes the count over all buckets `<= x, <= y`.
fn cumulate(g: &mut [Vec<u64>]) {
    for x in 0..g.len() {
        for y in 0..g[x].len() {
            let mut v = g[x][y];
            if x > 0 {
                v += g[x - 1][y];
            }
            if y > 0 {
                v += g[x][y - 1];
            }
            if x > 0 && y > 0 {
                v -= g[x - 1][y - 1];
            }
            g[x][y] = v;
        }
    }
}
