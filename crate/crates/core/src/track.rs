//! Pit identity across drives.
//!
//! Association is greedy nearest-centroid on the unwrapped surface.
//! Observations of a drive are visited in ascending centroid order and each
//! takes the nearest still-unclaimed live track within the match radius
//! (ties go to the smaller track id). A live track left without an
//! observation although one lies within its radius has coalesced with the
//! track that claimed it: the younger of the two stops with `merged_into`
//! set and the older keeps the observation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveMeta, PitObservation, PitTrack, Validate, Validation};
use crate::segment::sort_observations;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingParams {
    pub match_radius_mm: f64,
    pub enable_monotone_envelope: bool,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            match_radius_mm: 1.0,
            enable_monotone_envelope: true,
        }
    }
}

impl Validate for TrackingParams {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        if !(self.match_radius_mm > 0.0) {
            v.violations.push(format!(
                "match_radius_mm must be positive, got {}",
                self.match_radius_mm
            ));
        }
        v
    }
}

/// Older first: earlier birth, then smaller id.
fn age_key(t: &PitTrack) -> (u32, u32) {
    (t.birth_drive, t.track_id)
}

/// Extends `tracks` with the observations of one drive.
pub fn associate(
    tracks: &mut Vec<PitTrack>,
    mut new_obs: Vec<PitObservation>,
    params: &TrackingParams,
    circumference_mm: f64,
) -> Result<()> {
    let v = params.validate();
    if !v.is_valid() {
        return Err(Error::invalid("tracking params", v.summary()));
    }
    let Some(drive) = new_obs.first().map(|o| o.drive_index) else {
        return Ok(());
    };
    if let Some(o) = new_obs.iter().find(|o| o.drive_index != drive) {
        return Err(Error::invalid(
            "observations",
            format!("mixed drives {} and {} in one batch", drive, o.drive_index),
        ));
    }
    if let Some(last) = tracks.iter().map(|t| t.last().drive_index).max() {
        if drive <= last {
            return Err(Error::DriveOrder { last, got: drive });
        }
    }

    sort_observations(&mut new_obs);
    let radius = params.match_radius_mm;
    let live: Vec<usize> = (0..tracks.len()).filter(|&i| tracks[i].is_alive()).collect();
    let dist = |ti: usize, o: &PitObservation| {
        tracks[ti].last().centroid.distance(&o.centroid, circumference_mm)
    };

    // observation -> track slot, and the reverse
    let mut claim: Vec<Option<usize>> = vec![None; new_obs.len()];
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (oi, o) in new_obs.iter().enumerate() {
        let best = live
            .iter()
            .copied()
            .filter(|ti| !owner.contains_key(ti))
            .map(|ti| (dist(ti, o), tracks[ti].track_id, ti))
            .filter(|&(d, _, _)| d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, _, ti)) = best {
            claim[oi] = Some(ti);
            owner.insert(ti, oi);
        }
    }

    // Coalescence: unmatched live tracks whose nearest observation was
    // claimed by someone else.
    let mut merges: Vec<(usize, usize)> = Vec::new(); // (younger, older)
    let mut unmatched: Vec<usize> = live
        .iter()
        .copied()
        .filter(|ti| !owner.contains_key(ti))
        .collect();
    unmatched.sort_by_key(|&ti| tracks[ti].track_id);
    for ti in unmatched {
        let nearest = new_obs
            .iter()
            .enumerate()
            .map(|(oi, o)| (dist(ti, o), oi))
            .filter(|&(d, _)| d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, oi)) = nearest else { continue };
        let Some(holder) = claim[oi] else { continue };
        if age_key(&tracks[ti]) < age_key(&tracks[holder]) {
            claim[oi] = Some(ti);
            owner.remove(&holder);
            owner.insert(ti, oi);
            merges.push((holder, ti));
        } else {
            merges.push((ti, holder));
        }
    }

    let mut next_id = tracks.iter().map(|t| t.track_id + 1).max().unwrap_or(0);
    let into: BTreeMap<usize, usize> = merges.iter().copied().collect();
    for &(younger, older) in &merges {
        // Follow chains so nobody merges into a track that stops this drive.
        let mut target = older;
        while let Some(&next) = into.get(&target) {
            target = next;
        }
        let older_id = tracks[target].track_id;
        let t = &mut tracks[younger];
        t.merged_into = Some(older_id);
        t.merged_at = Some(drive);
    }
    for (oi, o) in new_obs.into_iter().enumerate() {
        match claim[oi] {
            Some(ti) => tracks[ti].observations.push(o),
            None => {
                tracks.push(PitTrack::new(next_id, o));
                next_id += 1;
            }
        }
    }
    tracks.sort_by_key(|t| t.track_id);
    Ok(())
}

/// Replaces the size series of a track by their running maxima.
pub fn monotone_envelope(track: &PitTrack) -> PitTrack {
    let mut out = track.clone();
    let (mut a, mut b, mut area) = (0f64, 0f64, 0f64);
    for o in &mut out.observations {
        a = a.max(o.axial_length_mm);
        b = b.max(o.tangential_length_mm);
        area = area.max(o.area_mm2);
        o.axial_length_mm = a;
        o.tangential_length_mm = b;
        o.area_mm2 = area;
    }
    out
}

/// Tracks a whole sequence of drives. `drives` yields the observations of
/// each drive in chronological order.
pub fn track_all<I>(drives: I, params: &TrackingParams, circumference_mm: f64) -> Result<Vec<PitTrack>>
where
    I: IntoIterator<Item = Vec<PitObservation>>,
{
    let mut tracks = Vec::new();
    for obs in drives {
        associate(&mut tracks, obs, params, circumference_mm)?;
    }
    if params.enable_monotone_envelope {
        tracks = tracks.iter().map(monotone_envelope).collect();
    }
    Ok(tracks)
}

fn revolutions_of(drives: &[DriveMeta], drive: u32) -> Option<u64> {
    drives
        .iter()
        .find(|d| d.drive_index == drive)
        .map(|d| d.cumulative_revolutions)
}

/// When the pit first appeared, as a fraction of the revolutions to failure.
pub fn birth_fraction(track: &PitTrack, failure_drive: u32, drives: &[DriveMeta]) -> Result<f64> {
    let end = revolutions_of(drives, failure_drive).ok_or(Error::MissingDrive(failure_drive))?;
    let birth =
        revolutions_of(drives, track.birth_drive).ok_or(Error::MissingDrive(track.birth_drive))?;
    if track.birth_drive > failure_drive {
        return Err(Error::invalid(
            "birth drive",
            format!("{} is after failure drive {failure_drive}", track.birth_drive),
        ));
    }
    if end == 0 {
        return Err(Error::invalid("failure drive", "zero cumulative revolutions"));
    }
    Ok(birth as f64 / end as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameRef, SurfaceCoord};
    use chrono::{DateTime, Utc};

    const C: f64 = 100.0;

    fn obs(drive: u32, axial: f64, tangential: f64, b: f64) -> PitObservation {
        PitObservation {
            drive_index: drive,
            frame: FrameRef::new(drive, 0, 22.5, 100, 100),
            centroid: SurfaceCoord::new(axial, tangential),
            axial_length_mm: b / 10.0,
            tangential_length_mm: b,
            area_mm2: b * b / 20.0,
            pixel_count: 10,
        }
    }

    fn params() -> TrackingParams {
        TrackingParams {
            match_radius_mm: 0.5,
            enable_monotone_envelope: true,
        }
    }

    #[test]
    fn nearby_observation_extends_track() {
        let mut tracks = Vec::new();
        associate(&mut tracks, vec![obs(1, 10.0, 5.0, 0.1)], &params(), C).unwrap();
        associate(&mut tracks, vec![obs(2, 10.05, 5.02, 0.2)], &params(), C).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations.len(), 2);
        assert_eq!(tracks[0].birth_drive, 1);
    }

    #[test]
    fn distant_observation_opens_track() {
        let mut tracks = Vec::new();
        associate(&mut tracks, vec![obs(1, 10.0, 5.0, 0.1)], &params(), C).unwrap();
        associate(&mut tracks, vec![obs(2, 15.0, 5.0, 0.1)], &params(), C).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[1].birth_drive, 2);
        assert_eq!(tracks[1].track_id, 1);
    }

    #[test]
    fn matching_wraps_around_circumference() {
        let mut tracks = Vec::new();
        associate(&mut tracks, vec![obs(1, 10.0, 99.9, 0.1)], &params(), C).unwrap();
        associate(&mut tracks, vec![obs(2, 10.0, 0.1, 0.1)], &params(), C).unwrap();
        assert_eq!(tracks.len(), 1);
    }

    #[test]
    fn coalescing_pits_merge_into_older() {
        let mut tracks = Vec::new();
        associate(&mut tracks, vec![obs(1, 10.0, 5.0, 0.1)], &params(), C).unwrap();
        associate(&mut tracks, vec![obs(2, 10.0, 5.0, 0.1), obs(2, 10.0, 5.3, 0.1)], &params(), C)
            .unwrap();
        assert_eq!(tracks.len(), 2);
        // One large pit centred between both.
        let big = obs(3, 10.0, 5.2, 0.6);
        // Brute-force check of the premise: both centroids lie within radius.
        for t in &tracks {
            assert!(t.last().centroid.distance(&big.centroid, C) <= 0.5);
        }
        associate(&mut tracks, vec![big], &params(), C).unwrap();
        let alive: Vec<_> = tracks.iter().filter(|t| t.is_alive()).collect();
        assert_eq!(alive.len(), 1);
        assert_eq!(alive[0].track_id, 0);
        assert_eq!(alive[0].observations.len(), 3);
        assert_eq!(tracks[1].merged_into, Some(0));
        assert_eq!(tracks[1].merged_at, Some(3));
        assert_eq!(tracks[1].observations.len(), 1);
    }

    #[test]
    fn older_track_takes_observation_even_if_younger_is_closer() {
        let mut tracks = Vec::new();
        associate(&mut tracks, vec![obs(1, 10.0, 5.0, 0.1)], &params(), C).unwrap();
        associate(&mut tracks, vec![obs(2, 10.0, 5.0, 0.1), obs(2, 10.0, 5.4, 0.1)], &params(), C)
            .unwrap();
        associate(&mut tracks, vec![obs(3, 10.0, 5.3, 0.6)], &params(), C).unwrap();
        assert_eq!(tracks[0].observations.len(), 3);
        assert_eq!(tracks[1].merged_into, Some(0));
    }

    #[test]
    fn two_close_pits_stay_separate_when_both_seen() {
        let mut tracks = Vec::new();
        let p = params();
        associate(&mut tracks, vec![obs(1, 10.0, 5.0, 0.1), obs(1, 10.0, 5.3, 0.1)], &p, C).unwrap();
        associate(&mut tracks, vec![obs(2, 10.0, 5.3, 0.1), obs(2, 10.0, 5.0, 0.1)], &p, C).unwrap();
        assert!(tracks.iter().all(|t| t.is_alive() && t.observations.len() == 2));
    }

    #[test]
    fn out_of_order_drive_rejected() {
        let mut tracks = Vec::new();
        associate(&mut tracks, vec![obs(5, 10.0, 5.0, 0.1)], &params(), C).unwrap();
        assert!(matches!(
            associate(&mut tracks, vec![obs(5, 10.0, 5.0, 0.1)], &params(), C),
            Err(Error::DriveOrder { last: 5, got: 5 })
        ));
        assert!(associate(&mut tracks, vec![obs(6, 1.0, 1.0, 0.1), obs(7, 1.0, 1.0, 0.1)], &params(), C)
            .is_err());
    }

    #[test]
    fn permutation_invariant() {
        let batch = vec![obs(2, 10.0, 5.0, 0.1), obs(2, 20.0, 5.0, 0.1), obs(2, 10.2, 5.1, 0.1)];
        let seed = vec![obs(1, 10.1, 5.0, 0.1), obs(1, 20.0, 5.1, 0.1)];
        let mut a = Vec::new();
        associate(&mut a, seed.clone(), &params(), C).unwrap();
        let mut b = a.clone();
        associate(&mut a, batch.clone(), &params(), C).unwrap();
        let mut rev = batch;
        rev.reverse();
        associate(&mut b, rev, &params(), C).unwrap();
        assert_eq!(a, b);
        let _ = seed;
    }

    #[test]
    fn envelope_is_running_max() {
        let mut t = PitTrack::new(0, obs(0, 0.0, 0.0, 1.0));
        for (d, b) in [(1, 3.0), (2, 2.0), (3, 4.0)] {
            t.observations.push(obs(d, 0.0, 0.0, b));
        }
        let e = monotone_envelope(&t);
        let b: Vec<_> = e.observations.iter().map(|o| o.tangential_length_mm).collect();
        assert_eq!(b, vec![1.0, 3.0, 3.0, 4.0]);
        let areas: Vec<_> = e.observations.iter().map(|o| o.area_mm2).collect();
        assert!(areas.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(monotone_envelope(&e), e);
        let single = PitTrack::new(3, obs(0, 0.0, 0.0, 1.0));
        assert_eq!(monotone_envelope(&single), single);
    }

    fn drives(n: u32) -> Vec<DriveMeta> {
        let t0 = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        (0..=n)
            .map(|i| DriveMeta {
                drive_index: i,
                wall_time: t0 + chrono::Duration::hours(4 * i as i64),
                cumulative_revolutions: i as u64 * 96_000,
                flange_temperature_c: None,
                frame_count: 16,
            })
            .collect()
    }

    #[test]
    fn birth_fractions() {
        let d = drives(120);
        let t = PitTrack::new(0, obs(30, 0.0, 0.0, 1.0));
        assert_eq!(birth_fraction(&t, 120, &d).unwrap(), 0.25);
        let t = PitTrack::new(0, obs(120, 0.0, 0.0, 1.0));
        assert_eq!(birth_fraction(&t, 120, &d).unwrap(), 1.0);
        let t = PitTrack::new(0, obs(0, 0.0, 0.0, 1.0));
        assert_eq!(birth_fraction(&t, 120, &d).unwrap(), 0.0);
        assert!(matches!(birth_fraction(&t, 500, &d), Err(Error::MissingDrive(500))));
    }
}
