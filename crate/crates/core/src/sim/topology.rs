use crate::data::{SensorMeta, SensorNetworkSchema, SensorType};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    HeatStation,
    PumpStation,
    PipeUnit,
    ConsumerUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopoNode {
    pub name: String,
    pub kind: NodeKind,
}

/// Directed pipe between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Transport delay in simulation steps.
    pub delay: usize,
    /// Quadratic loss coefficient, bar per (l/min)².
    pub loss: f64,
}

/// Simulated quantity a sensor reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    SupplyTemp(usize),
    ReturnTemp(usize),
    SupplyPressure(usize),
    ReturnPressure(usize),
    /// Flow through supply edge `e`.
    EdgeFlow(usize),
    BoilerTank,
    BoilerTankTop,
    BoilerTankBottom,
    BoilerFlue,
    BoilerRoom,
    BoilerLoopFlow,
    /// Secondary-side supply / return temperature of consumer `c`.
    SecondarySupplyTemp(usize),
    SecondaryReturnTemp(usize),
    SecondaryFlow(usize),
    MeterFlow(usize),
    MeterInlet(usize),
    MeterOutlet(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPlacement {
    pub meta: SensorMeta,
    pub probe: Probe,
}

/// Tree-shaped supply network rooted at the heat station; the return network
/// is the edge-reversed mirror of `supply`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub nodes: Vec<TopoNode>,
    pub supply: Vec<Edge>,
    /// Consumer node ids, in smart-meter order.
    pub consumers: Vec<usize>,
    /// Leaf through which a small bypass flow returns supply water.
    pub bypass: Option<usize>,
    pub sensors: Vec<SensorPlacement>,
}

impl TopologySpec {
    pub fn root(&self) -> usize {
        0
    }

    /// Return edges: each supply edge with its direction inverted.
    pub fn return_edges(&self) -> Vec<Edge> {
        self.supply
            .iter()
            .map(|e| Edge {
                from: e.to,
                to: e.from,
                ..e.clone()
            })
            .collect()
    }

    /// Index of the supply edge entering `node`, if any.
    pub fn parent_edge(&self, node: usize) -> Option<usize> {
        self.supply.iter().position(|e| e.to == node)
    }

    pub fn child_edges(&self, node: usize) -> Vec<usize> {
        self.supply
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == node)
            .map(|(i, _)| i)
            .collect()
    }

    /// Nodes ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = vec![self.root()];
        let mut i = 0;
        while i < order.len() {
            let n = order[i];
            order.extend(self.child_edges(n).into_iter().map(|e| self.supply[e].to));
            i += 1;
        }
        order
    }

    pub fn schema(&self) -> Result<SensorNetworkSchema> {
        SensorNetworkSchema::new(self.sensors.iter().map(|s| s.meta.clone()).collect())
    }
}

/// Heat station → pump station → trunk pipe unit → two consumer branches plus
/// a bypass leaf, instrumented with the twenty temperature, fifteen pressure
/// and nine flow input sensors of the laboratory inventory and one
/// flow / inlet / outlet triplet per smart meter.
pub fn build_default_topology() -> TopologySpec {
    let node = |name: &str, kind| TopoNode {
        name: name.to_string(),
        kind,
    };
    let nodes = vec![
        node("heat_station", NodeKind::HeatStation), // 0
        node("pump_station", NodeKind::PumpStation), // 1
        node("pipe_1", NodeKind::PipeUnit),          // 2
        node("pipe_2", NodeKind::PipeUnit),          // 3
        node("pipe_3", NodeKind::PipeUnit),          // 4
        node("pipe_4", NodeKind::PipeUnit),          // 5
        node("consumer_21", NodeKind::ConsumerUnit), // 6
        node("consumer_22", NodeKind::ConsumerUnit), // 7
    ];
    let edge = |from, to, delay, loss| Edge {
        from,
        to,
        delay,
        loss,
    };
    let supply = vec![
        edge(0, 1, 2, 0.002),  // e0 boiler -> pump
        edge(1, 2, 4, 0.010),  // e1 trunk
        edge(2, 3, 5, 0.030),  // e2 branch to consumer 21
        edge(2, 4, 7, 0.035),  // e3 branch to consumer 22
        edge(2, 5, 3, 0.400),  // e4 bypass
        edge(3, 6, 4, 0.030),  // e5
        edge(4, 7, 6, 0.030),  // e6
    ];

    use Probe::*;
    use SensorType::{Flow as F, Pressure as P, Temperature as T};
    let input = |id: &str, kind, probe| SensorPlacement {
        meta: SensorMeta::input(id, kind),
        probe,
    };
    let target = |id: &str, kind, probe| SensorPlacement {
        meta: SensorMeta::target(id, kind),
        probe,
    };
    let sensors = vec![
        // heat station
        input("Boiler_T1", T, BoilerTank),
        input("Boiler_T2", T, ReturnTemp(0)),
        input("Boiler_T3", T, BoilerTankTop),
        input("Boiler_T4", T, BoilerTankBottom),
        input("Boiler_T5", T, BoilerFlue),
        input("Boiler_T6", T, BoilerRoom),
        input("Boiler_dP2", P, SupplyPressure(0)),
        input("Boiler_Q2_1", F, EdgeFlow(0)),
        input("Boiler_Q4_6", F, BoilerLoopFlow),
        // pipe units
        input("Pipe_T1_1", T, SupplyTemp(2)),
        input("Pipe_T1_2", T, ReturnTemp(2)),
        input("Pipe_T2_1", T, SupplyTemp(3)),
        input("Pipe_T2_3", T, ReturnTemp(3)),
        input("Pipe_T3_1", T, SupplyTemp(4)),
        input("Pipe_T3_2", T, ReturnTemp(4)),
        input("Pipe_T4_1", T, SupplyTemp(5)),
        input("Pipe_T4_3", T, ReturnTemp(5)),
        input("Pipe_P1_1", P, SupplyPressure(2)),
        input("Pipe_P1_2", P, ReturnPressure(2)),
        input("Pipe_P2_1", P, SupplyPressure(3)),
        input("Pipe_P2_3", P, ReturnPressure(3)),
        input("Pipe_P3_1", P, SupplyPressure(4)),
        input("Pipe_P3_2", P, ReturnPressure(4)),
        input("Pipe_P4_1", P, SupplyPressure(5)),
        input("Pipe_P4_3", P, ReturnPressure(5)),
        input("Pipe_Q3_1", F, EdgeFlow(2)),
        input("Pipe_Q3_2", F, EdgeFlow(3)),
        input("Pipe_Q3_3", F, EdgeFlow(4)),
        input("Pipe_Q3_4", F, EdgeFlow(1)),
        // consumer units
        input("Consumer_T_21", T, SecondarySupplyTemp(0)),
        input("Consumer_T_22", T, SecondaryReturnTemp(0)),
        input("Consumer_T_23", T, SecondarySupplyTemp(1)),
        input("Consumer_T_24", T, SecondaryReturnTemp(1)),
        input("Consumer_P_21", P, SupplyPressure(6)),
        input("Consumer_P_22", P, ReturnPressure(6)),
        input("Consumer_P_23", P, SupplyPressure(7)),
        input("Consumer_P_24", P, ReturnPressure(7)),
        input("Consumer_Q1_21", F, SecondaryFlow(0)),
        input("Consumer_Q1_22", F, SecondaryFlow(1)),
        // pumping station
        input("Pump_T3_1", T, SupplyTemp(1)),
        input("Pump_T3_3", T, ReturnTemp(1)),
        input("Pump_P3_1", P, SupplyPressure(1)),
        input("Pump_P3_3", P, ReturnPressure(1)),
        input("Pump_Q2_12", F, EdgeFlow(0)),
        // smart meters
        target("SM1_Flow", F, MeterFlow(0)),
        target("SM1_Inlet_T", T, MeterInlet(0)),
        target("SM1_Outlet_T", T, MeterOutlet(0)),
        target("SM2_Flow", F, MeterFlow(1)),
        target("SM2_Inlet_T", T, MeterInlet(1)),
        target("SM2_Outlet_T", T, MeterOutlet(1)),
    ];
    TopologySpec {
        nodes,
        supply,
        consumers: vec![6, 7],
        bypass: Some(5),
        sensors,
    }
}
