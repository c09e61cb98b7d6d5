//! Detection metrics over a classified run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::Classification;
use crate::clock::Millis;
use crate::control::AlertId;
use crate::helmet::ReadingSample;
use crate::types::Channel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Coalesced repeats; counted neither as TP nor FP.
    pub duplicates: usize,
    /// TP + FP.
    pub alarms: usize,
    /// TP + FN.
    pub hazards: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelAccuracy {
    pub samples: usize,
    /// Mean absolute error in the channel's unit.
    pub mae: f64,
    /// Mean of 100·|error|/truth over samples with truth > 0.
    pub mean_pct_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTime {
    pub hazard_id: usize,
    pub alert_id: AlertId,
    pub response_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: Counts,
    /// Percent.
    pub false_alarm_rate: f64,
    /// Percent.
    pub missed_detection_rate: f64,
    pub detection_accuracy: BTreeMap<Channel, ChannelAccuracy>,
    pub response_times: Vec<ResponseTime>,
    pub mean_response_ms: Option<f64>,
    pub max_response_ms: Option<Millis>,
}

/// `100·num/den`, or 0 for an empty denominator.
pub fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// One response time per true positive, ordered by hazard.
pub fn response_pairs(c: &Classification) -> Vec<ResponseTime> {
    let mut out: Vec<ResponseTime> = c
        .matches
        .iter()
        .map(|m| ResponseTime {
            hazard_id: m.hazard_id,
            alert_id: m.alert_id,
            response_ms: m.raised_at - m.onset,
        })
        .collect();
    out.sort_by_key(|r| r.hazard_id);
    out
}

pub fn accuracy(samples: &[ReadingSample]) -> BTreeMap<Channel, ChannelAccuracy> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        abs: f64,
        pct_n: usize,
        pct: f64,
    }
    let mut acc: BTreeMap<Channel, Acc> = BTreeMap::new();
    for s in samples {
        let a = acc.entry(s.channel).or_default();
        let err = (s.reading - s.truth).abs();
        a.n += 1;
        a.abs += err;
        if s.truth > 0.0 {
            a.pct_n += 1;
            a.pct += 100.0 * err / s.truth;
        }
    }
    acc.into_iter()
        .map(|(c, a)| {
            (
                c,
                ChannelAccuracy {
                    samples: a.n,
                    mae: a.abs / a.n as f64,
                    mean_pct_error: (a.pct_n > 0).then(|| a.pct / a.pct_n as f64),
                },
            )
        })
        .collect()
}

pub fn compute_metrics(
    c: &Classification,
    reading_pairs: &[ReadingSample],
    response: &[ResponseTime],
) -> MetricsReport {
    let (tp, fp, fn_) = (c.tp(), c.fp(), c.fn_count());
    let mean_response_ms = (!response.is_empty()).then(|| {
        response.iter().map(|r| r.response_ms as f64).sum::<f64>() / response.len() as f64
    });
    MetricsReport {
        counts: Counts {
            tp,
            fp,
            fn_,
            duplicates: c.duplicates(),
            alarms: tp + fp,
            hazards: tp + fn_,
        },
        false_alarm_rate: percent(fp, tp + fp),
        missed_detection_rate: percent(fn_, tp + fn_),
        detection_accuracy: accuracy(reading_pairs),
        response_times: response.to_vec(),
        mean_response_ms,
        max_response_ms: response.iter().map(|r| r.response_ms).max(),
    }
}
