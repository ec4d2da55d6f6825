use super::pairing::PairingIntent;

/// Power or bandwidth split rule chosen by a UAV each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AllocationScheme {
    /// Action-supplied random proportions over served GUs.
    Random = 1,
    /// Equal split.
    Even = 2,
    /// Shares proportional to `1 / d^alpha`.
    Distance = 3,
    /// Weighted mix of `Distance` and `Random`.
    Mixed = 4,
}

impl AllocationScheme {
    pub const ALL: [AllocationScheme; 4] = [Self::Random, Self::Even, Self::Distance, Self::Mixed];

    /// Scheme from its 1-based index.
    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i.checked_sub(1)?).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One UAV's decision for a time slot.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridAction {
    /// Commanded velocity in m/s; clamped to the speed limit on execution.
    pub velocity_cmd: [f64; 3],
    pub pairing: PairingIntent,
    pub power_scheme: AllocationScheme,
    pub bandwidth_scheme: AllocationScheme,
    /// Nonnegative raw proportions for the random schemes, one per GU.
    pub random_proportions_p: Vec<f64>,
    pub random_proportions_b: Vec<f64>,
}

impl HybridAction {
    /// Hover, claim nothing, split evenly.
    pub fn idle(num_gus: usize) -> Self {
        Self {
            velocity_cmd: [0.0; 3],
            pairing: PairingIntent::from_logits(vec![-1.0; num_gus]),
            power_scheme: AllocationScheme::Even,
            bandwidth_scheme: AllocationScheme::Even,
            random_proportions_p: vec![1.0; num_gus],
            random_proportions_b: vec![1.0; num_gus],
        }
    }
}
