//! Ring model of a multi-hop sensor network.
//!
//! Nodes sit in concentric rings around the gateway; ring `d` is `d` hops
//! away and holds `C·(2d−1)` nodes, so a network of `D` rings has `C·D²`
//! nodes. Every node originates one message per unit of time and each hop
//! costs one transmission.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingNetwork {
    c: u64,
    d: u64,
}

impl RingNetwork {
    /// `c` is the average neighbour count, `d` the number of rings.
    pub fn new(c: u64, d: u64) -> Result<Self> {
        if c == 0 || d == 0 {
            return Err(Error::invalid(format!("ring network needs C >= 1 and D >= 1, got C={c}, D={d}")));
        }
        Ok(Self { c, d })
    }

    pub fn neighbours(&self) -> u64 {
        self.c
    }

    pub fn rings(&self) -> u64 {
        self.d
    }

    pub fn nodes_in_ring(&self, ring: u64) -> Result<u64> {
        if ring > self.d {
            return Err(Error::invalid(format!("ring {ring} beyond outermost ring {}", self.d)));
        }
        Ok(if ring == 0 { 0 } else { self.c * (2 * ring - 1) })
    }

    pub fn total_nodes(&self) -> u64 {
        self.c * self.d * self.d
    }

    /// Exact hop-amplified transmissions per unit of time:
    /// Σ_{d=1}^{D} C·d·(2d−1) = C·D(D+1)(4D−1)/6.
    pub fn total_transmissions(&self) -> u64 {
        let d = self.d;
        self.c * d * (d + 1) * (4 * d - 1) / 6
    }

    /// The widely quoted closed form `(2/3)·C·D³ − (1/2)·C·D²`. It does not
    /// equal the exact sum and is kept for comparison only.
    pub fn approx_transmissions_closed_form(&self) -> f64 {
        let (c, d) = (self.c as f64, self.d as f64);
        2.0 * c * d.powi(3) / 3.0 - c * d * d / 2.0
    }

    /// Transmissions avoided network-wide when every node saves
    /// `saved_percent` of its own, rounded down.
    pub fn network_savings(&self, saved_percent: f64) -> Result<u64> {
        if !(0.0..=100.0).contains(&saved_percent) {
            return Err(Error::invalid(format!("saved fraction must be in [0, 100], got {saved_percent}")));
        }
        let total = self.total_transmissions();
        // Percentages with at most six decimals are applied exactly in integers.
        let scaled = saved_percent * 1e6;
        if scaled.fract() == 0.0 {
            return Ok((total as u128 * scaled as u128 / 100_000_000) as u64);
        }
        Ok((total as f64 * saved_percent / 100.0).floor() as u64)
    }
}
