//! Day-stepped four-node supply chain (supplier → producer → distributor →
//! retailer) comparing a fixed-review baseline with the forecast-driven
//! reorder contract committed through the ledger.
//!
//! Units are whole products. Each day runs, in order: pipeline arrivals,
//! retail demand (unmet demand is lost), forecast update, the retailer's
//! reorder decision, dispatch from the distributor, and one-for-one
//! replenishment upstream. The supplier produces to order.
//!
//! Delivery time of a retailer replenishment is `base + congestion × lost
//! units over the trailing window`, so a policy that keeps the shelf stocked
//! delivers faster without the effect being imposed directly.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anfis::{classify_efficiency, EfficiencyClass, MembershipFunction};
use crate::dataset::IndicatorRecord;
use crate::economics::{
    optimize_decisions, profit_retailer, profit_supplier, DecisionBounds, Decisions,
    EconomicParams, EconomicsError,
};
use crate::forecast::{DemandForecastState, ForecastError};
use crate::ledger::{
    evaluate_reorder_contract, verify_chain, EventKind, LedgerChain, LedgerError, ReorderParams,
    Role, SigningKey, Stakeholder, VerificationReport,
};

/// Reference scenario shipped with the crate.
pub const REFERENCE_SCENARIO_TOML: &str = include_str!("../scenarios/reference.toml");

const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Economics(#[from] EconomicsError),
    #[error("ledger verification failed: {0}")]
    Verification(VerificationReport),
    #[error("chain holds {chain} reorder events but {committed} reorders were committed")]
    ReorderMismatch { chain: usize, committed: usize },
    #[error("flow balance violated: {0}")]
    FlowBalance(String),
    #[error("metrics file line {line}: {message}")]
    Metrics { line: u64, message: String },
}

// ---------------------------------------------------------------------------
// Scenario

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    pub probability: f64,
    pub mean_size: f64,
    pub size_cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub baseline_review_days: u32,
    pub baseline_quantity: u64,
    pub alpha: f64,
    pub safety_stock: f64,
    /// Days of forecast demand covered by the order-up-to level.
    pub coverage_days: u32,
    pub lead_time_days: u32,
    pub initial_retailer_stock: u64,
    pub initial_upstream_stock: u64,
    /// Croston estimates the forecast starts from.
    pub prior_size: f64,
    pub prior_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliveryConfig {
    pub base_minutes: f64,
    pub congestion_minutes_per_unit: f64,
    pub backlog_window_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerConfig {
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon_days: u32,
    pub seed: u64,
    pub replications: u32,
    pub epoch: u64,
    pub demand: DemandConfig,
    pub policy: PolicyConfig,
    pub delivery: DeliveryConfig,
    pub ledger: LedgerConfig,
    pub economics: EconomicParams<f64>,
    pub bounds: DecisionBounds<f64>,
}

impl Scenario {
    pub fn reference() -> Self {
        Self::from_toml_str(REFERENCE_SCENARIO_TOML).expect("shipped scenario is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimulationError> {
        let scenario: Self =
            toml::from_str(text).map_err(|e| SimulationError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let fail = |m: String| Err(SimulationError::Scenario(m));
        if self.horizon_days == 0 || self.replications == 0 {
            return fail("horizon_days and replications must be positive".into());
        }
        let d = &self.demand;
        if !(0.0..=1.0).contains(&d.probability) || !(d.mean_size > 0.0) || !(d.size_cv >= 0.0) {
            return fail("demand needs probability in [0, 1], mean_size > 0, size_cv >= 0".into());
        }
        let p = &self.policy;
        if p.baseline_review_days == 0 || p.lead_time_days == 0 {
            return fail("review and lead times must be at least one day".into());
        }
        if !(0.0..=1.0).contains(&p.alpha) || !(p.safety_stock >= 0.0) {
            return fail("policy.alpha must be in [0, 1] and safety_stock >= 0".into());
        }
        if !(p.prior_size > 0.0) || !(p.prior_interval > p.alpha / 2.0) {
            return fail("prior_size must be > 0 and prior_interval > alpha/2".into());
        }
        let l = &self.delivery;
        if !(l.base_minutes >= 0.0) || !(l.congestion_minutes_per_unit >= 0.0) {
            return fail("delivery minutes must be non-negative".into());
        }
        if self.ledger.k == 0 || self.ledger.k > self.ledger.n {
            return fail(format!(
                "ledger needs 1 <= k <= n, got k={} n={}",
                self.ledger.k, self.ledger.n
            ));
        }
        self.bounds.validate()?;
        Ok(())
    }

    fn reorder_params(&self) -> ReorderParams<f64> {
        ReorderParams {
            safety_stock: self.policy.safety_stock,
            horizon_periods: self.policy.coverage_days,
        }
    }

    fn initial_forecast(&self) -> Result<DemandForecastState<f64>, ForecastError> {
        let p = &self.policy;
        DemandForecastState::with_estimates(p.alpha, p.prior_size, p.prior_interval, 0)
    }

    /// Signers `n` in role order, derived from the seed so runs are reproducible.
    pub fn signers(&self) -> Vec<Stakeholder> {
        const ROLES: [Role; 5] = [
            Role::Supplier,
            Role::Producer,
            Role::Distributor,
            Role::Retailer,
            Role::Auditor,
        ];
        (0..self.ledger.n)
            .map(|i| {
                let role = ROLES[i % ROLES.len()];
                let id = format!("{}-{}", role.as_str(), i / ROLES.len() + 1);
                let key = SigningKey::derive(&format!("chainfis/{}/{id}", self.seed));
                Stakeholder::new(id, role, key)
            })
            .collect()
    }

    /// One demand series per replication, drawn from stream `r` of the seed.
    /// `size_factor` scales transaction sizes without changing which days
    /// see demand.
    pub fn demand_streams(&self, size_factor: f64) -> Vec<Vec<u64>> {
        let d = &self.demand;
        let sizes = LogNormal::from_mean_cv(d.mean_size, d.size_cv.max(1e-12))
            .expect("validated demand parameters");
        (0..self.replications)
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(u64::from(r));
                (0..self.horizon_days)
                    .map(|_| {
                        let occurs = rng.random::<f64>() < d.probability;
                        let size: f64 = sizes.sample(&mut rng);
                        if occurs {
                            (size * size_factor).round().max(1.0) as u64
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// State

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Supplier,
    Producer,
    Distributor,
    Retailer,
}

impl NodeRole {
    pub const ALL: [NodeRole; 4] = [
        Self::Supplier,
        Self::Producer,
        Self::Distributor,
        Self::Retailer,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Baseline,
    Anfis,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Anfis => "anfis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shipment {
    pub quantity: u64,
    pub arrival_day: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub role: NodeRole,
    pub inventory: u64,
    /// Inbound shipments not yet received.
    pub pipeline: Vec<Shipment>,
    /// Cumulative fraction of requested units this node supplied.
    pub service_level: f64,
    requested: u64,
    fulfilled: u64,
}

impl NodeState {
    fn new(role: NodeRole, inventory: u64) -> Self {
        Self {
            role,
            inventory,
            pipeline: Vec::new(),
            service_level: 1.0,
            requested: 0,
            fulfilled: 0,
        }
    }

    pub fn in_transit(&self) -> u64 {
        self.pipeline.iter().map(|s| s.quantity).sum()
    }

    fn record_service(&mut self, requested: u64, fulfilled: u64) {
        self.requested += requested;
        self.fulfilled += fulfilled;
        if self.requested > 0 {
            self.service_level = self.fulfilled as f64 / self.requested as f64;
        }
    }

    fn receive(&mut self, day: u32) -> u64 {
        let (arrived, pending): (Vec<_>, Vec<_>) =
            self.pipeline.iter().partition(|s| s.arrival_day <= day);
        self.pipeline = pending;
        let q = arrived.iter().map(|s| s.quantity).sum();
        self.inventory += q;
        q
    }
}

/// Cumulative flow over one link (upstream node → downstream node).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkFlow {
    pub shipped: u64,
    pub received: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRecord {
    pub day: u32,
    pub requested: u64,
    pub shipped: u64,
    pub delivery_minutes: f64,
}

/// Whole-chain state of one replication under one policy.
#[derive(Debug, Clone)]
pub struct SupplyChainState {
    pub nodes: [NodeState; 4],
    /// Indexed by the upstream node of each link.
    pub links: [LinkFlow; 3],
    pub forecast: DemandForecastState<f64>,
    pub replication: u32,
    window: VecDeque<(u64, u64)>,
    demand_total: u64,
    sales_total: u64,
    retailer_requested: u64,
    distributor_shortfall: u64,
    on_hand_sum: u64,
    zero_days: u32,
    order_days: Vec<u32>,
    days: u32,
}

impl SupplyChainState {
    pub fn new(scenario: &Scenario, replication: u32) -> Result<Self, SimulationError> {
        let p = &scenario.policy;
        let nodes = NodeRole::ALL.map(|role| {
            let stock = match role {
                NodeRole::Retailer => p.initial_retailer_stock,
                _ => p.initial_upstream_stock,
            };
            NodeState::new(role, stock)
        });
        Ok(Self {
            nodes,
            links: [LinkFlow::default(); 3],
            forecast: scenario.initial_forecast()?,
            replication,
            window: VecDeque::new(),
            demand_total: 0,
            sales_total: 0,
            retailer_requested: 0,
            distributor_shortfall: 0,
            on_hand_sum: 0,
            zero_days: 0,
            order_days: Vec::new(),
            days: 0,
        })
    }

    pub fn node(&self, role: NodeRole) -> &NodeState {
        &self.nodes[role as usize]
    }

    fn retailer(&mut self) -> &mut NodeState {
        &mut self.nodes[NodeRole::Retailer as usize]
    }

    /// Shipped out of each node equals received downstream plus in transit.
    pub fn flow_balance(&self) -> Result<(), SimulationError> {
        for (i, link) in self.links.iter().enumerate() {
            let in_transit = self.nodes[i + 1].in_transit();
            if link.shipped != link.received + in_transit {
                return Err(SimulationError::FlowBalance(format!(
                    "{:?} shipped {} but {:?} received {} with {} in transit",
                    self.nodes[i].role,
                    link.shipped,
                    self.nodes[i + 1].role,
                    link.received,
                    in_transit
                )));
            }
        }
        Ok(())
    }

    fn ship(&mut self, from: usize, requested: u64, day: u32, lead: u32) -> u64 {
        let shipped = if from == NodeRole::Supplier as usize {
            requested
        } else {
            requested.min(self.nodes[from].inventory)
        };
        if from != NodeRole::Supplier as usize {
            self.nodes[from].inventory -= shipped;
        }
        self.nodes[from].record_service(requested, shipped);
        if shipped > 0 {
            self.nodes[from + 1].pipeline.push(Shipment {
                quantity: shipped,
                arrival_day: day + lead,
            });
            self.links[from].shipped += shipped;
        }
        shipped
    }

    /// Order-up-to level used as the stocking reference for indicators.
    fn reference_level(&self, scenario: &Scenario) -> f64 {
        let rate = self.forecast.sba_forecast().unwrap_or(0.0);
        rate * f64::from(scenario.policy.coverage_days) + scenario.policy.safety_stock
    }
}

/// Signing context for forecast-driven reorders.
pub struct LedgerSession<'a> {
    pub chain: &'a mut LedgerChain,
    pub signers: &'a [Stakeholder],
    pub threshold: usize,
}

impl LedgerSession<'_> {
    /// Proposes the event to all signers, collects the first `threshold`
    /// signatures and seals it. Returns the sealed height.
    fn commit(&mut self, event: crate::ledger::SupplyChainEvent) -> Result<u64, LedgerError> {
        let required = self.signers.iter().map(|s| s.id.clone()).collect();
        let mut tx = self
            .chain
            .propose_transaction(vec![event], required, self.threshold)?;
        for signer in &self.signers[..self.threshold] {
            self.chain.sign(&mut tx, signer)?;
        }
        self.chain.seal_block(vec![tx])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayOutcome {
    pub day: u32,
    pub demand: u64,
    pub sales: u64,
    pub lost: u64,
    pub order: Option<OrderRecord>,
    pub sealed_height: Option<u64>,
    pub indicators: IndicatorRecord,
}

/// Advances one replication by one day (days are 1-based).
pub fn step_day(
    state: &mut SupplyChainState,
    day: u32,
    demand: u64,
    policy: Policy,
    scenario: &Scenario,
    ledger: &mut LedgerSession<'_>,
) -> Result<DayOutcome, SimulationError> {
    let lead = scenario.policy.lead_time_days;
    let retail_idx = NodeRole::Retailer as usize;
    let start_stock = state.retailer().inventory;

    for i in 1..4 {
        let arrived = state.nodes[i].receive(day);
        state.links[i - 1].received += arrived;
    }

    let retailer = state.retailer();
    let sales = demand.min(retailer.inventory);
    retailer.inventory -= sales;
    retailer.record_service(demand, sales);
    let lost = demand - sales;
    state.demand_total += demand;
    state.sales_total += sales;
    state.window.push_back((demand, lost));
    while state.window.len() > scenario.delivery.backlog_window_days.max(1) as usize {
        state.window.pop_front();
    }
    state.forecast = state.forecast.update(demand as f64, u64::from(day))?;

    let mut sealed_height = None;
    let requested = match policy {
        Policy::Baseline => {
            if day.is_multiple_of(scenario.policy.baseline_review_days) {
                scenario.policy.baseline_quantity
            } else {
                0
            }
        }
        Policy::Anfis => {
            let r = &state.nodes[retail_idx];
            let position = (r.inventory + r.in_transit()) as f64;
            match evaluate_reorder_contract(position, &state.forecast, &scenario.reorder_params())?
            {
                Some(proposal) => {
                    let timestamp = scenario.epoch
                        + (u64::from(state.replication) * u64::from(scenario.horizon_days)
                            + u64::from(day))
                            * SECONDS_PER_DAY;
                    let validator = &ledger.signers[0].id;
                    let event = proposal.to_event(u64::from(day), validator, timestamp);
                    sealed_height = Some(ledger.commit(event)?);
                    proposal.quantity
                }
                None => 0,
            }
        }
    };

    let mut order = None;
    if requested > 0 {
        let shipped = state.ship(NodeRole::Distributor as usize, requested, day, lead);
        state.retailer_requested += requested;
        state.distributor_shortfall += requested - shipped;
        let backlog: u64 = state.window.iter().map(|&(_, l)| l).sum();
        order = Some(OrderRecord {
            day,
            requested,
            shipped,
            delivery_minutes: scenario.delivery.base_minutes
                + scenario.delivery.congestion_minutes_per_unit * backlog as f64,
        });
        state.order_days.push(day);
        let produced = state.ship(NodeRole::Producer as usize, shipped, day, lead);
        state.ship(NodeRole::Supplier as usize, produced, day, lead);
    }

    state.days += 1;
    let on_hand = state.retailer().inventory;
    state.on_hand_sum += on_hand;
    if on_hand == 0 {
        state.zero_days += 1;
    }
    let indicators = day_indicators(state, day, demand, sales, lost, start_stock, scenario);
    Ok(DayOutcome {
        day,
        demand,
        sales,
        lost,
        order,
        sealed_height,
        indicators,
    })
}

fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Daily indicator vector of the retailer-facing chain.
///
/// * `quality_p1`: share of today's demand served (%).
/// * `material_p2`: change in retailer stock over the day (%, clamped to ±100).
/// * `logistic_p3`: share of the retailer's position that is in transit (%).
/// * `purchase_p4`: cumulative share of demand served (%).
/// * `order_plan_l1`: position relative to the order-up-to level (%, capped at 100).
/// * `order_speed_l2`: mean days between orders so far, or days elapsed before the second order.
/// * `delivery_c1`: share of demand served over the backlog window (%).
/// * `volume_c2`: on-hand stock relative to the order-up-to level (%, capped at 100).
/// * `delivery_error_c3`: share of today's demand lost (%).
/// * `node_satisfaction_c4`: five times the mean node service level.
/// * `outbound_error_s1`: cumulative distributor shortfall against retailer orders (%).
/// * `damage_s2`: always 0; transit loss is not modeled.
/// * `turnover_s3`: cumulative sales over mean on-hand stock.
/// * `zero_inventory`: days so far that ended with an empty shelf.
fn day_indicators(
    state: &SupplyChainState,
    day: u32,
    demand: u64,
    sales: u64,
    lost: u64,
    start_stock: u64,
    scenario: &Scenario,
) -> IndicatorRecord {
    let r = state.node(NodeRole::Retailer);
    let on_hand = r.inventory;
    let transit = r.in_transit();
    let reference = state.reference_level(scenario).max(1.0);
    let (w_demand, w_lost) = state
        .window
        .iter()
        .fold((0, 0), |(d, l), &(wd, wl)| (d + wd, l + wl));
    let intervals = state.order_days.windows(2).map(|w| f64::from(w[1] - w[0]));
    let order_speed = if state.order_days.len() >= 2 {
        intervals.sum::<f64>() / (state.order_days.len() - 1) as f64
    } else {
        f64::from(day)
    };
    let mean_on_hand = state.on_hand_sum as f64 / f64::from(state.days.max(1));
    let service = state.nodes.iter().map(|n| n.service_level).sum::<f64>() / 4.0;
    IndicatorRecord {
        stage: day,
        quality_p1: percent(sales, demand),
        material_p2: (100.0 * (on_hand as f64 - start_stock as f64) / (start_stock.max(1) as f64))
            .clamp(-100.0, 100.0),
        logistic_p3: if on_hand + transit == 0 {
            0.0
        } else {
            100.0 * transit as f64 / (on_hand + transit) as f64
        },
        purchase_p4: percent(state.sales_total, state.demand_total),
        order_plan_l1: (100.0 * (on_hand + transit) as f64 / reference).min(100.0),
        order_speed_l2: order_speed,
        delivery_c1: percent(w_demand - w_lost, w_demand),
        volume_c2: (100.0 * on_hand as f64 / reference).min(100.0),
        node_satisfaction_c4: 5.0 * service,
        outbound_error_s1: if state.retailer_requested == 0 {
            0.0
        } else {
            100.0 * state.distributor_shortfall as f64 / state.retailer_requested as f64
        },
        damage_s2: 0.0,
        turnover_s3: if mean_on_hand > 0.0 {
            state.sales_total as f64 / mean_on_hand
        } else {
            0.0
        },
        zero_inventory: f64::from(state.zero_days),
        delivery_error_c3: Some(if demand == 0 {
            0.0
        } else {
            100.0 * lost as f64 / demand as f64
        }),
    }
}

// ---------------------------------------------------------------------------
// Efficiency scoring

/// Service index in `[0, 1]`: mean of today's fill, window fill and
/// cumulative fill.
pub fn service_index(record: &IndicatorRecord) -> f64 {
    (record.quality_p1 + record.delivery_c1 + record.purchase_p4) / 300.0
}

/// Triangular memberships of the service index in Perfect/Good/Medium/Poor.
pub fn efficiency_scores(record: &IndicatorRecord) -> [f64; 4] {
    let x = service_index(record);
    let tri = |l, p, r| {
        MembershipFunction::triangular(l, p, r)
            .expect("ordered triangle")
            .eval(x)
    };
    [
        tri(0.95, 1.0, 1.05),
        tri(0.88, 0.94, 0.99),
        tri(0.75, 0.85, 0.92),
        tri(-1.0, 0.0, 0.80),
    ]
}

pub fn classify_record(record: &IndicatorRecord) -> ([f64; 4], [u8; 4], EfficiencyClass) {
    let scores = efficiency_scores(record);
    let (one_hot, class) = classify_efficiency(&scores);
    (scores, one_hot, class)
}

// ---------------------------------------------------------------------------
// Runs

/// Everything one policy produced over all replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub policy: Policy,
    pub demand_log: Vec<Vec<u64>>,
    pub orders: Vec<Vec<OrderRecord>>,
    pub daily: Vec<Vec<IndicatorRecord>>,
    pub lost_sales: u64,
    pub sealed_reorders: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationMetrics {
    pub policy: Policy,
    pub avg_delivery_time_minutes: f64,
    pub avg_reorder_interval_days: f64,
    pub avg_order_quantity: f64,
    pub order_count: usize,
    pub lost_sales: u64,
    /// Per-day indicators averaged over replications.
    pub daily: Vec<IndicatorRecord>,
    /// Mean of `daily`, with `stage` 0.
    pub summary: IndicatorRecord,
    pub efficiency_scores: [f64; 4],
    pub efficiency_one_hot: [u8; 4],
    pub efficiency: EfficiencyClass,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_record(records: &[&IndicatorRecord], stage: u32) -> IndicatorRecord {
    let n = records.len().max(1) as f64;
    let mut acc = [0.0; 13];
    let mut c3 = 0.0;
    for r in records {
        for (a, v) in acc.iter_mut().zip(r.values()) {
            *a += v;
        }
        c3 += r.delivery_error_c3.unwrap_or(0.0);
    }
    IndicatorRecord {
        stage,
        quality_p1: acc[0] / n,
        material_p2: acc[1] / n,
        logistic_p3: acc[2] / n,
        purchase_p4: acc[3] / n,
        order_plan_l1: acc[4] / n,
        order_speed_l2: acc[5] / n,
        delivery_c1: acc[6] / n,
        volume_c2: acc[7] / n,
        node_satisfaction_c4: acc[8] / n,
        outbound_error_s1: acc[9] / n,
        damage_s2: acc[10] / n,
        turnover_s3: acc[11] / n,
        zero_inventory: acc[12] / n,
        delivery_error_c3: Some(c3 / n),
    }
}

impl PolicyRun {
    pub fn metrics(&self) -> SimulationMetrics {
        let all_orders = self.orders.iter().flatten();
        let intervals = self
            .orders
            .iter()
            .flat_map(|o| o.windows(2).map(|w| f64::from(w[1].day - w[0].day)));
        let horizon = self.daily.first().map_or(0, Vec::len);
        let daily: Vec<IndicatorRecord> = (0..horizon)
            .map(|d| {
                let recs: Vec<&IndicatorRecord> = self.daily.iter().map(|rep| &rep[d]).collect();
                mean_record(&recs, d as u32 + 1)
            })
            .collect();
        let summary = mean_record(&daily.iter().collect::<Vec<_>>(), 0);
        let (efficiency_scores, efficiency_one_hot, efficiency) = classify_record(&summary);
        SimulationMetrics {
            policy: self.policy,
            avg_delivery_time_minutes: mean(all_orders.clone().map(|o| o.delivery_minutes)),
            avg_reorder_interval_days: mean(intervals),
            avg_order_quantity: mean(all_orders.clone().map(|o| o.requested as f64)),
            order_count: all_orders.count(),
            lost_sales: self.lost_sales,
            daily,
            summary,
            efficiency_scores,
            efficiency_one_hot,
            efficiency,
        }
    }
}

/// Runs every replication of one policy over the given demand streams,
/// sealing forecast-driven reorders into `chain`.
pub fn run_policy(
    scenario: &Scenario,
    policy: Policy,
    demand: &[Vec<u64>],
    chain: &mut LedgerChain,
    signers: &[Stakeholder],
) -> Result<PolicyRun, SimulationError> {
    let mut session = LedgerSession {
        chain,
        signers,
        threshold: scenario.ledger.k,
    };
    let mut run = PolicyRun {
        policy,
        demand_log: Vec::with_capacity(demand.len()),
        orders: Vec::with_capacity(demand.len()),
        daily: Vec::with_capacity(demand.len()),
        lost_sales: 0,
        sealed_reorders: 0,
    };
    for (r, stream) in demand.iter().enumerate() {
        let mut state = SupplyChainState::new(scenario, r as u32)?;
        let mut consumed = Vec::with_capacity(stream.len());
        let mut orders = Vec::new();
        let mut daily = Vec::with_capacity(stream.len());
        for (d, &units) in stream.iter().enumerate() {
            let out = step_day(
                &mut state,
                d as u32 + 1,
                units,
                policy,
                scenario,
                &mut session,
            )?;
            state.flow_balance()?;
            consumed.push(out.demand);
            run.lost_sales += out.lost;
            run.sealed_reorders += usize::from(out.sealed_height.is_some());
            orders.extend(out.order);
            daily.push(out.indicators);
        }
        run.demand_log.push(consumed);
        run.orders.push(orders);
        run.daily.push(daily);
    }
    Ok(run)
}

/// Forecast-policy run under a perturbed demand size and lead time.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedState {
    pub label: String,
    pub demand_factor: f64,
    pub lead_time_days: u32,
    /// Efficiency scores normalized to sum 1.
    pub metrics: [f64; 4],
}

/// Demand-size factors and lead-time offsets of the eight perturbed states.
pub const PERTURBATIONS: [(f64, i32); 8] = [
    (0.95, -1),
    (0.95, 0),
    (0.95, 1),
    (1.0, -1),
    (1.0, 1),
    (1.05, -1),
    (1.05, 0),
    (1.05, 1),
];

#[derive(Debug, Clone, PartialEq)]
pub struct EconomicsSummary {
    pub optimum: Decisions<f64>,
    pub coarse: Decisions<f64>,
    /// (supplier, retailer) profit at each policy's mean order quantity,
    /// holding the optimal price and effort.
    pub baseline_profits: (f64, f64),
    pub anfis_profits: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub baseline: SimulationMetrics,
    pub anfis: SimulationMetrics,
    pub baseline_run: PolicyRun,
    pub anfis_run: PolicyRun,
    pub perturbed: Vec<PerturbedState>,
    pub economics: EconomicsSummary,
    pub chain_height: u64,
    pub chain_reorders: usize,
}

fn register_all(chain: &mut LedgerChain, signers: &[Stakeholder]) -> Result<(), LedgerError> {
    for s in signers {
        chain.register_signer(s)?;
    }
    Ok(())
}

/// Runs both policies on identical demand, the eight perturbed states, and
/// the economic evaluation. The returned chain holds the signer
/// registrations and every forecast-policy reorder, and passes verification.
pub fn run_simulation(
    scenario: &Scenario,
) -> Result<(SimulationReport, LedgerChain), SimulationError> {
    scenario.validate()?;
    let signers = scenario.signers();
    let mut chain = LedgerChain::new(scenario.epoch);
    register_all(&mut chain, &signers)?;

    let demand = scenario.demand_streams(1.0);
    // The baseline never touches the ledger; a scratch chain keeps the signature uniform.
    let mut scratch = chain.clone();
    let baseline_run = run_policy(scenario, Policy::Baseline, &demand, &mut scratch, &signers)?;
    let anfis_run = run_policy(scenario, Policy::Anfis, &demand, &mut chain, &signers)?;
    if baseline_run.demand_log != anfis_run.demand_log {
        return Err(SimulationError::FlowBalance(
            "policies consumed different demand streams".into(),
        ));
    }

    let report = verify_chain(&chain);
    if !report.is_ok() {
        return Err(SimulationError::Verification(report));
    }
    let chain_reorders = chain.count_events(EventKind::Reorder);
    if chain_reorders != anfis_run.sealed_reorders {
        return Err(SimulationError::ReorderMismatch {
            chain: chain_reorders,
            committed: anfis_run.sealed_reorders,
        });
    }

    let mut perturbed = Vec::with_capacity(PERTURBATIONS.len());
    for (i, &(factor, offset)) in PERTURBATIONS.iter().enumerate() {
        let mut variant = scenario.clone();
        let lead = (scenario.policy.lead_time_days as i64 + i64::from(offset)).max(1);
        variant.policy.lead_time_days = lead as u32;
        let streams = scenario.demand_streams(factor);
        let mut scratch = LedgerChain::new(scenario.epoch);
        register_all(&mut scratch, &signers)?;
        let run = run_policy(&variant, Policy::Anfis, &streams, &mut scratch, &signers)?;
        let scores = run.metrics().efficiency_scores;
        let total: f64 = scores.iter().sum();
        perturbed.push(PerturbedState {
            label: format!("Zt{}", i + 1),
            demand_factor: factor,
            lead_time_days: lead as u32,
            metrics: scores.map(|s| if total > 0.0 { s / total } else { 0.0 }),
        });
    }

    let baseline = baseline_run.metrics();
    let anfis = anfis_run.metrics();
    let economics = evaluate_economics(scenario, &baseline, &anfis)?;
    Ok((
        SimulationReport {
            scenario: scenario.clone(),
            baseline,
            anfis,
            baseline_run,
            anfis_run,
            perturbed,
            economics,
            chain_height: chain.height(),
            chain_reorders,
        },
        chain,
    ))
}

fn evaluate_economics(
    scenario: &Scenario,
    baseline: &SimulationMetrics,
    anfis: &SimulationMetrics,
) -> Result<EconomicsSummary, SimulationError> {
    let params = &scenario.economics;
    let search = optimize_decisions(params, &scenario.bounds)?;
    let opt = search.refined;
    let at = |q: f64| {
        let q = q.max(scenario.bounds.quantity.lo);
        (
            profit_supplier(params, q, opt.effort),
            profit_retailer(params, opt.price, q, opt.effort),
        )
    };
    Ok(EconomicsSummary {
        optimum: opt,
        coarse: search.coarse,
        baseline_profits: at(baseline.avg_order_quantity),
        anfis_profits: at(anfis.avg_order_quantity),
    })
}

// ---------------------------------------------------------------------------
// Metrics file

/// Row order of the indicator report.
pub const INDICATOR_ROWS: [&str; 14] = [
    "quality_p1",
    "material_p2",
    "logistic_p3",
    "purchase_p4",
    "order_plan_l1",
    "order_speed_l2",
    "delivery_c1",
    "volume_c2",
    "delivery_error_c3",
    "node_satisfaction_c4",
    "outbound_error_s1",
    "damage_s2",
    "turnover_s3",
    "zero_inventory",
];

pub const COMPARISON_ROWS: [&str; 3] = [
    "avg_delivery_time_minutes",
    "avg_reorder_interval_days",
    "avg_order_quantity",
];

fn indicator_value(r: &IndicatorRecord, row: &str) -> f64 {
    match row {
        "quality_p1" => r.quality_p1,
        "material_p2" => r.material_p2,
        "logistic_p3" => r.logistic_p3,
        "purchase_p4" => r.purchase_p4,
        "order_plan_l1" => r.order_plan_l1,
        "order_speed_l2" => r.order_speed_l2,
        "delivery_c1" => r.delivery_c1,
        "volume_c2" => r.volume_c2,
        "delivery_error_c3" => r.delivery_error_c3.unwrap_or(0.0),
        "node_satisfaction_c4" => r.node_satisfaction_c4,
        "outbound_error_s1" => r.outbound_error_s1,
        "damage_s2" => r.damage_s2,
        "turnover_s3" => r.turnover_s3,
        "zero_inventory" => r.zero_inventory,
        _ => unreachable!("unknown indicator row {row}"),
    }
}

/// Machine-file number format: 17 significant digits.
pub fn fmt_machine(x: f64) -> String {
    format!("{x:.16e}")
}

/// One `section,row,column,value` line of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub section: String,
    pub row: String,
    pub column: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsFile {
    pub rows: Vec<MetricRow>,
}

impl MetricsFile {
    fn push(
        &mut self,
        section: &str,
        row: impl Into<String>,
        column: impl Into<String>,
        value: f64,
    ) {
        self.rows.push(MetricRow {
            section: section.into(),
            row: row.into(),
            column: column.into(),
            value,
        });
    }

    pub fn get(&self, section: &str, row: &str, column: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.section == section && r.row == row && r.column == column)
            .map(|r| r.value)
    }

    /// Rows of `section` in file order.
    pub fn section<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.section == section)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,row,column,value\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.section,
                r.row,
                r.column,
                fmt_machine(r.value)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SimulationError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| SimulationError::Metrics {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != ["section", "row", "column", "value"] {
            return Err(SimulationError::Metrics {
                line: 1,
                message: "expected header `section,row,column,value`".into(),
            });
        }
        let mut file = Self::default();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| SimulationError::Metrics {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != 4 {
                return Err(SimulationError::Metrics {
                    line,
                    message: format!("expected 4 fields, found {}", rec.len()),
                });
            }
            let value = rec[3]
                .parse::<f64>()
                .map_err(|_| SimulationError::Metrics {
                    line,
                    message: format!("column 4: cannot parse `{}` as a number", &rec[3]),
                })?;
            file.push(&rec[0], &rec[1], &rec[2], value);
        }
        if file.rows.is_empty() {
            return Err(SimulationError::Metrics {
                line: 1,
                message: "no metric rows".into(),
            });
        }
        Ok(file)
    }
}

impl SimulationReport {
    /// Long-format metrics: run parameters, policy comparison, indicator
    /// report, perturbed states, economics, daily series.
    pub fn metrics_file(&self) -> MetricsFile {
        let mut f = MetricsFile::default();
        let s = &self.scenario;
        f.push("run", "seed", "value", s.seed as f64);
        f.push("run", "horizon_days", "value", f64::from(s.horizon_days));
        f.push("run", "replications", "value", f64::from(s.replications));
        f.push("run", "chain_height", "value", self.chain_height as f64);
        f.push("run", "chain_reorders", "value", self.chain_reorders as f64);

        let pair = [(&self.baseline, "baseline"), (&self.anfis, "anfis")];
        for row in COMPARISON_ROWS {
            let pick = |m: &SimulationMetrics| match row {
                "avg_delivery_time_minutes" => m.avg_delivery_time_minutes,
                "avg_reorder_interval_days" => m.avg_reorder_interval_days,
                _ => m.avg_order_quantity,
            };
            for (m, col) in pair {
                f.push("comparison", row, col, pick(m));
            }
            f.push(
                "comparison",
                row,
                "ratio",
                pick(&self.anfis) / pick(&self.baseline),
            );
        }
        for (m, col) in pair {
            f.push("comparison", "order_count", col, m.order_count as f64);
            f.push("comparison", "lost_sales", col, m.lost_sales as f64);
        }

        for row in INDICATOR_ROWS {
            for (m, col) in pair {
                f.push("indicators", row, col, indicator_value(&m.summary, row));
            }
        }
        for class in EfficiencyClass::ALL {
            for (m, col) in pair {
                f.push(
                    "indicators",
                    format!("efficiency_{}", class.label().to_lowercase()),
                    col,
                    f64::from(m.efficiency_one_hot[class.index()]),
                );
            }
        }
        for class in EfficiencyClass::ALL {
            for (m, col) in pair {
                f.push(
                    "indicators",
                    format!("score_{}", class.label().to_lowercase()),
                    col,
                    m.efficiency_scores[class.index()],
                );
            }
        }

        for z in &self.perturbed {
            for (k, v) in z.metrics.iter().enumerate() {
                f.push("perturbed", &z.label, format!("metric{}", k + 1), *v);
            }
            f.push("perturbed", &z.label, "demand_factor", z.demand_factor);
            f.push(
                "perturbed",
                &z.label,
                "lead_time_days",
                f64::from(z.lead_time_days),
            );
        }

        let e = &self.economics;
        for (name, d) in [("optimum", &e.optimum), ("coarse", &e.coarse)] {
            f.push("economics", "price", name, d.price);
            f.push("economics", "quantity", name, d.quantity);
            f.push("economics", "effort", name, d.effort);
            f.push("economics", "supplier_profit", name, d.supplier_profit);
            f.push("economics", "retailer_profit", name, d.retailer_profit);
        }
        f.push(
            "economics",
            "supplier_profit",
            "baseline",
            e.baseline_profits.0,
        );
        f.push(
            "economics",
            "retailer_profit",
            "baseline",
            e.baseline_profits.1,
        );
        f.push("economics", "supplier_profit", "anfis", e.anfis_profits.0);
        f.push("economics", "retailer_profit", "anfis", e.anfis_profits.1);

        for (m, col) in pair {
            for rec in &m.daily {
                for row in INDICATOR_ROWS {
                    f.push(
                        "daily",
                        rec.stage.to_string(),
                        format!("{col}.{row}"),
                        indicator_value(rec, row),
                    );
                }
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        let mut s = Scenario::reference();
        s.replications = 3;
        s
    }

    #[test]
    fn reference_scenario_parses() {
        let s = Scenario::reference();
        assert_eq!((s.horizon_days, s.seed, s.replications), (30, 42, 50));
        assert_eq!((s.ledger.k, s.ledger.n), (2, 3));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = REFERENCE_SCENARIO_TOML.replace("seed = 42", "seed = 42\nsede = 1");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(SimulationError::Scenario(_))
        ));
    }

    #[test]
    fn zero_demand_day_only_moves_arrivals() {
        let s = small();
        let signers = s.signers();
        let mut chain = LedgerChain::new(s.epoch);
        register_all(&mut chain, &signers).unwrap();
        let mut session = LedgerSession {
            chain: &mut chain,
            signers: &signers,
            threshold: s.ledger.k,
        };
        let mut state = SupplyChainState::new(&s, 0).unwrap();
        let before: Vec<u64> = state.nodes.iter().map(|n| n.inventory).collect();
        let out = step_day(&mut state, 1, 0, Policy::Baseline, &s, &mut session).unwrap();
        assert!(out.order.is_none());
        let after: Vec<u64> = state.nodes.iter().map(|n| n.inventory).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn baseline_orders_only_on_review_days() {
        let s = small();
        let demand = s.demand_streams(1.0);
        let mut chain = LedgerChain::new(s.epoch);
        let signers = s.signers();
        register_all(&mut chain, &signers).unwrap();
        let run = run_policy(&s, Policy::Baseline, &demand, &mut chain, &signers).unwrap();
        for orders in &run.orders {
            assert!(orders.iter().all(|o| o.day % 5 == 0 && o.requested == 6));
        }
        assert_eq!(chain.count_events(EventKind::Reorder), 0);
    }

    #[test]
    fn anfis_reorders_are_sealed() {
        let s = small();
        let (report, chain) = run_simulation(&s).unwrap();
        let committed: usize = report.anfis_run.orders.iter().map(Vec::len).sum();
        assert_eq!(chain.count_events(EventKind::Reorder), committed);
        assert!(verify_chain(&chain).is_ok());
    }

    #[test]
    fn metrics_round_trip() {
        let (report, _) = run_simulation(&small()).unwrap();
        let file = report.metrics_file();
        let text = file.to_csv();
        let back = MetricsFile::from_csv(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_csv(), text);
    }
}
