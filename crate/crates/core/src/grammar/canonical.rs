use super::{GroupSpec, Level, Occupancy, Shape};

/// Rewrites a shape into a normal form with the same noiseless drawing.
///
/// Rules, applied until nothing changes:
/// - finite-group indices reduced modulo the group order, sorted and
///   deduplicated; a listing of the whole group becomes `Full`;
/// - translation indices sorted and deduplicated, `[c,c]` intervals become
///   the single offset `c`;
/// - identity levels (a single index 0 on any family) are dropped;
/// - `Rot n` full followed directly by `Rot m` full merges into
///   `Rot lcm(n, m)` full;
/// - adjacent single translations on the same axis are summed.
///
/// The input does not have to be valid; the rewrite is total.
pub fn canonicalize(s: &Shape) -> Shape {
    let mut levels: Vec<Level> = s.levels.iter().map(normalize_level).collect();
    loop {
        let before = levels.clone();
        levels.retain(|l| !is_identity(l));
        levels = merge_adjacent(levels);
        levels = levels.iter().map(normalize_level).collect();
        if levels == before {
            break;
        }
    }
    Shape::new(levels)
}

fn normalize_level(l: &Level) -> Level {
    let occ = match (&l.group, &l.occ) {
        (g, Occupancy::Discrete(v)) if g.order().is_some() => {
            let n = i64::from(g.order().unwrap_or(1));
            let mut idx: Vec<f64> = v
                .iter()
                .map(|x| {
                    if x.is_finite() && x.fract() == 0.0 {
                        (*x as i64).rem_euclid(n) as f64
                    } else {
                        *x
                    }
                })
                .collect();
            sort_dedup(&mut idx);
            if idx.len() == n as usize && idx.iter().enumerate().all(|(i, x)| *x == i as f64) {
                Occupancy::Full
            } else {
                Occupancy::Discrete(idx)
            }
        }
        (_, Occupancy::Discrete(v)) => {
            let mut idx = v.clone();
            sort_dedup(&mut idx);
            Occupancy::Discrete(idx)
        }
        (_, Occupancy::Interval { lo, hi }) if lo == hi => Occupancy::single(*lo),
        (_, occ) => occ.clone(),
    };
    Level::new(l.group, occ)
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a == b);
}

fn is_identity(l: &Level) -> bool {
    if l.group == GroupSpec::RotFull {
        return false;
    }
    matches!(&l.occ, Occupancy::Discrete(v) if v.len() == 1 && v[0] == 0.0)
}

fn merge_adjacent(levels: Vec<Level>) -> Vec<Level> {
    let mut out: Vec<Level> = Vec::with_capacity(levels.len());
    for l in levels {
        if let Some(prev) = out.last_mut() {
            if let Some(merged) = merge_pair(prev, &l) {
                *prev = merged;
                continue;
            }
        }
        out.push(l);
    }
    out
}

fn merge_pair(a: &Level, b: &Level) -> Option<Level> {
    match (&a.group, &a.occ, &b.group, &b.occ) {
        (GroupSpec::Rot(n), Occupancy::Full, GroupSpec::Rot(m), Occupancy::Full)
            if *n >= 2 && *m >= 2 =>
        {
            Some(Level::new(GroupSpec::Rot(lcm(*n, *m)), Occupancy::Full))
        }
        (ga, Occupancy::Discrete(x), gb, Occupancy::Discrete(y))
            if ga.is_translation() && ga == gb && x.len() == 1 && y.len() == 1 =>
        {
            Some(Level::new(*ga, Occupancy::single(x[0] + y[0])))
        }
        _ => None,
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}
