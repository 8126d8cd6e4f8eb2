//! Run results and their aggregation over seeds.

use crate::dsr::DropCause;

/// Terminal fates of originated data packets, other than delivery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DataDrops {
    pub ifq: u64,
    pub no_route: u64,
    pub link_break: u64,
    pub misroute: u64,
}

impl DataDrops {
    pub fn total(&self) -> u64 {
        self.ifq + self.no_route + self.link_break + self.misroute
    }

    pub(crate) fn record(&mut self, cause: DropCause) {
        match cause {
            DropCause::Ifq => self.ifq += 1,
            DropCause::NoRoute => self.no_route += 1,
            DropCause::LinkBreak => self.link_break += 1,
            DropCause::Misroute => self.misroute += 1,
        }
    }
}

/// Per-frame losses seen at the intended receiver or the sender's MAC.
/// These count frames, not packets, and may repeat for one packet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameLosses {
    /// Unicast frame arrived below the receive threshold.
    pub subthreshold: u64,
    /// Unicast frame destroyed by an overlapping reception.
    pub collision: u64,
    /// Frames discarded after the retry limit.
    pub retry: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ControlCounts {
    pub discoveries: u64,
    /// Originated and re-broadcast requests.
    pub rreq_sent: u64,
    pub rrep_sent: u64,
    pub rerr_sent: u64,
    pub cache_replies: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacTotals {
    pub rts_sent: u64,
    pub cts_sent: u64,
    pub data_sent: u64,
    pub ack_sent: u64,
    pub broadcasts_sent: u64,
    pub cts_timeouts: u64,
    pub ack_timeouts: u64,
    pub queue_drops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub seed: u64,
    /// Packets handed to routing by CBR sources.
    pub n_sent: u64,
    /// Distinct packets that reached their destination.
    pub n_recvd: u64,
    pub delivery_ratio: f64,
    pub drops: DataDrops,
    /// Packets still buffered or queued when the run ended.
    pub in_flight_at_end: u64,
    /// Pending packets found nowhere in the network; always zero unless
    /// the bookkeeping is broken.
    pub unaccounted: u64,
    pub frame_losses: FrameLosses,
    pub control: ControlCounts,
    pub mac: MacTotals,
    /// Mean end-to-end delay of delivered packets, seconds.
    pub mean_delay_s: f64,
    pub events: u64,
}

impl MetricsReport {
    /// Received plus dropped plus still in flight; equals `n_sent`.
    pub fn accounted(&self) -> u64 {
        self.n_recvd + self.drops.total() + self.in_flight_at_end
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

/// Per-seed reports plus summary statistics, ordered by replica index.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub reports: Vec<MetricsReport>,
    pub delivery_ratio: Summary,
    pub n_sent: Summary,
    pub n_recvd: Summary,
}

impl AggregateReport {
    pub fn from_reports(reports: Vec<MetricsReport>) -> Self {
        let pick = |f: fn(&MetricsReport) -> f64| {
            Summary::of(&reports.iter().map(f).collect::<Vec<_>>())
        };
        AggregateReport {
            delivery_ratio: pick(|r| r.delivery_ratio),
            n_sent: pick(|r| r.n_sent as f64),
            n_recvd: pick(|r| r.n_recvd as f64),
            reports,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert_eq!(Summary::of(&[0.7]), Summary { mean: 0.7, std: 0.0 });
    }
}
