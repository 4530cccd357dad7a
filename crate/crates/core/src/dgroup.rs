//! Decoupling groups, their Cayley graphs and Eulerian pulse words.
//!
//! A pulse word `p_1 p_2 … p_L` drives the control propagator through the
//! vertices `g_l = p_l · g_{l−1}` (left multiplication, letters taken as the
//! Pauli matrices themselves). With this convention the XY8 word started at
//! the identity visits `X, −iZ, −Y, −I, −Y, −iZ, X, I`.
//!
//! Graph structure compares elements up to a global phase; [`cumulative_path`]
//! keeps the full phase.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::su2::{pauli, Mat2, Pauli, C64, PHASE_EQ_TOL};

const UNITARY_TOL: f64 = 1e-12;
const AVERAGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("element is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("element is not a Pauli operator up to global phase")]
    NotPauli,
    #[error("group has no elements")]
    EmptyGroup,
    #[error("no generators given")]
    EmptyGenerators,
    #[error("duplicate group element {0} (up to phase)")]
    DuplicateElement(Pauli),
    #[error("product {generator}·{vertex} = {product} leaves the vertex set")]
    NotClosed {
        vertex: Pauli,
        generator: Pauli,
        product: Pauli,
    },
    #[error("start vertex {0} is not in the graph")]
    UnknownVertex(Pauli),
    #[error("graph is not connected from the start vertex ({used} of {total} edges reachable)")]
    Disconnected { used: usize, total: usize },
    #[error("pulse word is empty")]
    EmptyWord,
    #[error("invalid pulse letter {0:?}")]
    InvalidLetter(char),
}

/// Group element with its Pauli label (defined up to phase).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    unitary: Mat2,
    label: Pauli,
}

impl GroupElement {
    pub fn new(unitary: Mat2) -> Result<Self, GroupError> {
        let defect = unitary.unitarity_defect();
        if defect > UNITARY_TOL {
            return Err(GroupError::NotUnitary(defect));
        }
        let label = Pauli::ALL
            .into_iter()
            .find(|&p| unitary.equal_up_to_phase(&pauli(p), PHASE_EQ_TOL))
            .ok_or(GroupError::NotPauli)?;
        Ok(GroupElement { unitary, label })
    }

    pub fn pauli(label: Pauli) -> Self {
        GroupElement {
            unitary: pauli(label),
            label,
        }
    }

    pub fn identity() -> Self {
        GroupElement::pauli(Pauli::I)
    }

    pub fn unitary(&self) -> &Mat2 {
        &self.unitary
    }

    pub fn label(&self) -> Pauli {
        self.label
    }

    /// `self · rhs` with full phase.
    pub fn compose(&self, rhs: &GroupElement) -> GroupElement {
        let unitary = self.unitary * rhs.unitary;
        GroupElement {
            unitary,
            label: label_of_product(self.label, rhs.label),
        }
    }

    /// Phase `c` with `unitary = c · pauli(label)`.
    pub fn phase(&self) -> C64 {
        pauli(self.label).best_phase_to(&self.unitary)
    }

    pub fn same_up_to_phase(&self, other: &GroupElement) -> bool {
        self.label == other.label
    }

    /// Signed name such as `X`, `-iZ` or `-I`.
    pub fn signed_name(&self) -> String {
        let c = self.phase();
        let prefix = if (c - C64::new(1.0, 0.0)).norm() < 1e-9 {
            ""
        } else if (c + C64::new(1.0, 0.0)).norm() < 1e-9 {
            "-"
        } else if (c - C64::new(0.0, 1.0)).norm() < 1e-9 {
            "i"
        } else if (c + C64::new(0.0, 1.0)).norm() < 1e-9 {
            "-i"
        } else {
            return format!("({:.3}{:+.3}i){}", c.re, c.im, self.label);
        };
        format!("{prefix}{}", self.label)
    }
}

/// Pauli label of `a · b` up to phase.
fn label_of_product(a: Pauli, b: Pauli) -> Pauli {
    use Pauli::*;
    match (a, b) {
        (I, p) | (p, I) => p,
        (p, q) if p == q => I,
        (X, Y) | (Y, X) => Z,
        (Y, Z) | (Z, Y) => X,
        _ => Y,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub generator: usize,
    pub to: usize,
}

/// Cayley graph: one directed edge `v → h·v` per vertex `v` and generator `h`.
#[derive(Debug, Clone)]
pub struct CayleyGraph {
    vertices: Vec<GroupElement>,
    generators: Vec<GroupElement>,
    edges: Vec<Edge>,
}

impl CayleyGraph {
    pub fn vertices(&self) -> &[GroupElement] {
        &self.vertices
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_index(&self, label: Pauli) -> Option<usize> {
        self.vertices.iter().position(|v| v.label == label)
    }

    pub fn generator_index(&self, label: Pauli) -> Option<usize> {
        self.generators.iter().position(|g| g.label == label)
    }

    /// Edge index of `(from, generator)`; edges are stored vertex-major.
    pub fn edge_index(&self, from: usize, generator: usize) -> usize {
        from * self.generators.len() + generator
    }

    fn target(&self, from: usize, generator: usize) -> usize {
        self.edges[self.edge_index(from, generator)].to
    }

    pub fn in_degree(&self, vertex: usize) -> usize {
        self.edges.iter().filter(|e| e.to == vertex).count()
    }

    pub fn out_degree(&self, vertex: usize) -> usize {
        self.edges.iter().filter(|e| e.from == vertex).count()
    }
}

pub fn build_cayley(group: &[GroupElement], generators: &[GroupElement]) -> Result<CayleyGraph, GroupError> {
    if group.is_empty() {
        return Err(GroupError::EmptyGroup);
    }
    if generators.is_empty() {
        return Err(GroupError::EmptyGenerators);
    }
    for (i, v) in group.iter().enumerate() {
        if group[..i].iter().any(|w| w.same_up_to_phase(v)) {
            return Err(GroupError::DuplicateElement(v.label));
        }
    }
    let mut edges = Vec::with_capacity(group.len() * generators.len());
    for (from, v) in group.iter().enumerate() {
        for (gi, g) in generators.iter().enumerate() {
            let product = g.compose(v);
            let to = group
                .iter()
                .position(|w| w.same_up_to_phase(&product))
                .ok_or(GroupError::NotClosed {
                    vertex: v.label,
                    generator: g.label,
                    product: product.label,
                })?;
            edges.push(Edge {
                from,
                generator: gi,
                to,
            });
        }
    }
    Ok(CayleyGraph {
        vertices: group.to_vec(),
        generators: generators.to_vec(),
        edges,
    })
}

/// The single-qubit Pauli group `{I, X, Y, Z}` (up to phase).
pub fn pauli_group() -> Vec<GroupElement> {
    Pauli::ALL.into_iter().map(GroupElement::pauli).collect()
}

/// Two-element group `{I, axis}`.
pub fn two_element_group(axis: Pauli) -> Vec<GroupElement> {
    vec![GroupElement::identity(), GroupElement::pauli(axis)]
}

pub fn generators(labels: &[Pauli]) -> Vec<GroupElement> {
    labels.iter().copied().map(GroupElement::pauli).collect()
}

/// Ordered list of generator labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PulseWord(Vec<Pauli>);

impl PulseWord {
    pub fn new(letters: Vec<Pauli>) -> Result<Self, GroupError> {
        if letters.is_empty() {
            return Err(GroupError::EmptyWord);
        }
        Ok(PulseWord(letters))
    }

    pub fn cpmg(axis: Pauli) -> Self {
        PulseWord(vec![axis, axis])
    }

    pub fn xy4() -> Self {
        use Pauli::*;
        PulseWord(vec![X, Y, X, Y])
    }

    pub fn xy8() -> Self {
        use Pauli::*;
        PulseWord(vec![X, Y, X, Y, Y, X, Y, X])
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PulseWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PulseWord {
    type Err = GroupError;

    /// Accepts `XYXY` as well as separated forms like `X,Y,X,Y`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let letters = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| Pauli::from_symbol(c).ok_or(GroupError::InvalidLetter(c)))
            .collect::<Result<Vec<_>, _>>()?;
        PulseWord::new(letters)
    }
}

/// Hierholzer's algorithm; at every vertex the lowest-indexed unused
/// generator is taken first.
pub fn eulerian_cycle(graph: &CayleyGraph, start: &GroupElement) -> Result<PulseWord, GroupError> {
    let start_idx = graph
        .vertex_index(start.label)
        .ok_or(GroupError::UnknownVertex(start.label))?;
    let n_gen = graph.generators.len();
    let total = graph.edges.len();
    let mut next_unused = vec![0usize; graph.vertices.len()];

    // Stack of (vertex, generator used to arrive here).
    let mut stack: Vec<(usize, Option<usize>)> = vec![(start_idx, None)];
    let mut circuit: Vec<usize> = Vec::with_capacity(total);
    while let Some(&(v, arrived_by)) = stack.last() {
        if next_unused[v] < n_gen {
            let g = next_unused[v];
            next_unused[v] += 1;
            stack.push((graph.target(v, g), Some(g)));
        } else {
            stack.pop();
            if let Some(g) = arrived_by {
                circuit.push(g);
            }
        }
    }
    if circuit.len() != total {
        return Err(GroupError::Disconnected {
            used: circuit.len(),
            total,
        });
    }
    circuit.reverse();
    PulseWord::new(circuit.into_iter().map(|g| graph.generators[g].label).collect())
}

/// Running products `g_l = p_l ··· p_1 · start` with full phases.
pub fn cumulative_path(word: &PulseWord, start: &GroupElement) -> Vec<GroupElement> {
    word.letters()
        .iter()
        .scan(*start, |g, &p| {
            *g = GroupElement::pauli(p).compose(g);
            Some(*g)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EulerianDiagnostic {
    Ok,
    UnknownLetter { step: usize, letter: Pauli },
    RepeatedEdge { step: usize, from: Pauli, generator: Pauli },
    MissingEdge { from: Pauli, generator: Pauli },
    NotClosed { end: Pauli },
}

impl fmt::Display for EulerianDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EulerianDiagnostic::Ok => write!(f, "ok"),
            EulerianDiagnostic::UnknownLetter { step, letter } => {
                write!(f, "letter {letter} at step {step} is not a generator")
            }
            EulerianDiagnostic::RepeatedEdge { step, from, generator } => {
                write!(f, "edge {from} -{generator}-> repeated at step {step}")
            }
            EulerianDiagnostic::MissingEdge { from, generator } => {
                write!(f, "edge {from} -{generator}-> never traversed")
            }
            EulerianDiagnostic::NotClosed { end } => {
                write!(f, "walk ends at {end} instead of the start vertex")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EulerianReport {
    pub pass: bool,
    pub diagnostic: EulerianDiagnostic,
}

/// Strict Eulerian check, walking from the identity (or the first vertex
/// when the identity is absent).
pub fn verify_eulerian(word: &PulseWord, graph: &CayleyGraph) -> EulerianReport {
    let start = graph
        .vertex_index(Pauli::I)
        .map(|_| GroupElement::identity())
        .unwrap_or(graph.vertices[0]);
    verify_eulerian_from(word, graph, &start)
}

pub fn verify_eulerian_from(word: &PulseWord, graph: &CayleyGraph, start: &GroupElement) -> EulerianReport {
    let fail = |diagnostic| EulerianReport {
        pass: false,
        diagnostic,
    };
    let Some(start_idx) = graph.vertex_index(start.label) else {
        return fail(EulerianDiagnostic::NotClosed { end: start.label });
    };
    let mut used = vec![false; graph.edges.len()];
    let mut v = start_idx;
    for (step, &letter) in word.letters().iter().enumerate() {
        let Some(g) = graph.generator_index(letter) else {
            return fail(EulerianDiagnostic::UnknownLetter { step, letter });
        };
        let e = graph.edge_index(v, g);
        if used[e] {
            return fail(EulerianDiagnostic::RepeatedEdge {
                step,
                from: graph.vertices[v].label,
                generator: letter,
            });
        }
        used[e] = true;
        v = graph.edges[e].to;
    }
    if let Some(e) = used.iter().position(|u| !u) {
        let edge = graph.edges[e];
        return fail(EulerianDiagnostic::MissingEdge {
            from: graph.vertices[edge.from].label,
            generator: graph.generators[edge.generator].label,
        });
    }
    if v != start_idx {
        return fail(EulerianDiagnostic::NotClosed {
            end: graph.vertices[v].label,
        });
    }
    EulerianReport {
        pass: true,
        diagnostic: EulerianDiagnostic::Ok,
    }
}

/// Zeroth-order averaging: `Σ_l g_l† E g_l = 0` over the path from the identity
/// for every error `E`.
pub fn verify_average_decoupling(word: &PulseWord, errors: &[Pauli]) -> bool {
    let path = cumulative_path(word, &GroupElement::identity());
    errors.iter().all(|&e| {
        let err = pauli(e);
        let sum = path
            .iter()
            .fold(Mat2::zero(), |acc, g| acc + g.unitary.adjoint() * err * g.unitary);
        sum.max_abs() <= AVERAGE_TOL
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Pauli::*;

    fn pauli_xy_graph() -> CayleyGraph {
        build_cayley(&pauli_group(), &generators(&[X, Y])).unwrap()
    }

    #[test]
    fn cayley_structure() {
        let g = build_cayley(&two_element_group(X), &generators(&[X])).unwrap();
        assert_eq!((g.vertices().len(), g.edges().len()), (2, 2));
        let g = pauli_xy_graph();
        assert_eq!((g.vertices().len(), g.edges().len()), (4, 8));
        for v in 0..4 {
            assert_eq!(g.in_degree(v), 2);
            assert_eq!(g.out_degree(v), 2);
        }
    }

    #[test]
    fn cayley_errors() {
        assert_eq!(
            build_cayley(&two_element_group(X), &[]).unwrap_err(),
            GroupError::EmptyGenerators
        );
        assert!(matches!(
            build_cayley(&two_element_group(X), &generators(&[Y])),
            Err(GroupError::NotClosed { .. })
        ));
        assert!(matches!(
            build_cayley(&generators(&[I, X, X]), &generators(&[X])),
            Err(GroupError::DuplicateElement(X))
        ));
    }

    #[test]
    fn element_labels_ignore_phase() {
        let minus_i_z = pauli(Z).scale(C64::new(0.0, -1.0));
        let el = GroupElement::new(minus_i_z).unwrap();
        assert_eq!(el.label(), Z);
        assert_eq!(el.signed_name(), "-iZ");
        let h = Mat2::new(
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
        )
        .scale(C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        assert_eq!(GroupElement::new(h).unwrap_err(), GroupError::NotPauli);
    }

    #[test]
    fn cpmg_cycle() {
        let g = build_cayley(&two_element_group(X), &generators(&[X])).unwrap();
        let word = eulerian_cycle(&g, &GroupElement::identity()).unwrap();
        assert_eq!(word, PulseWord::cpmg(X));
    }

    #[test]
    fn single_vertex_self_loop() {
        let g = build_cayley(&[GroupElement::identity()], &generators(&[I])).unwrap();
        let word = eulerian_cycle(&g, &GroupElement::identity()).unwrap();
        assert_eq!(word.letters(), &[I]);
    }

    #[test]
    fn pauli_cycle_is_eulerian_from_every_start() {
        let g = pauli_xy_graph();
        for v in g.vertices() {
            let word = eulerian_cycle(&g, v).unwrap();
            assert_eq!(word.len(), 8);
            let report = verify_eulerian_from(&word, &g, v);
            assert!(report.pass, "{word} from {}: {}", v.label(), report.diagnostic);
        }
    }

    #[test]
    fn unknown_start_vertex() {
        let g = build_cayley(&two_element_group(X), &generators(&[X])).unwrap();
        assert_eq!(
            eulerian_cycle(&g, &GroupElement::pauli(Z)).unwrap_err(),
            GroupError::UnknownVertex(Z)
        );
    }

    #[test]
    fn xy8_signed_path() {
        let path = cumulative_path(&PulseWord::xy8(), &GroupElement::identity());
        let names: Vec<_> = path.iter().map(GroupElement::signed_name).collect();
        assert_eq!(names, ["X", "-iZ", "-Y", "-I", "-Y", "-iZ", "X", "I"]);
    }

    #[test]
    fn short_paths() {
        let path = cumulative_path(&PulseWord::cpmg(X), &GroupElement::identity());
        let labels: Vec<_> = path.iter().map(|g| g.label()).collect();
        assert_eq!(labels, [X, I]);
        let single: PulseWord = "Y".parse().unwrap();
        let path = cumulative_path(&single, &GroupElement::identity());
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].label(), Y);
    }

    #[test]
    fn strict_eulerian_examples() {
        let g = pauli_xy_graph();
        assert!(verify_eulerian(&PulseWord::xy8(), &g).pass);
        let xy4 = verify_eulerian(&PulseWord::xy4(), &g);
        assert!(!xy4.pass);
        assert_eq!(
            xy4.diagnostic,
            EulerianDiagnostic::MissingEdge { from: I, generator: Y }
        );
        let gy = build_cayley(&two_element_group(Y), &generators(&[Y])).unwrap();
        assert!(verify_eulerian(&PulseWord::cpmg(Y), &gy).pass);
    }

    #[test]
    fn eulerian_failure_modes() {
        let g = pauli_xy_graph();
        let repeated: PulseWord = "XXXX".parse().unwrap();
        assert!(matches!(
            verify_eulerian(&repeated, &g).diagnostic,
            EulerianDiagnostic::RepeatedEdge { step: 2, .. }
        ));
        let foreign: PulseWord = "XZ".parse().unwrap();
        assert!(matches!(
            verify_eulerian(&foreign, &g).diagnostic,
            EulerianDiagnostic::UnknownLetter { step: 1, letter: Z }
        ));
    }

    #[test]
    fn average_decoupling_examples() {
        assert!(verify_average_decoupling(&PulseWord::xy4(), &[Z]));
        assert!(!verify_average_decoupling(&PulseWord::cpmg(X), &[X]));
        assert!(verify_average_decoupling(&PulseWord::xy8(), &[X, Y, Z]));
    }

    #[test]
    fn exhaustive_length_eight_words() {
        let g = pauli_xy_graph();
        let mut eulerian = 0;
        for bits in 0u32..256 {
            let letters = (0..8).map(|k| if bits >> k & 1 == 0 { X } else { Y }).collect();
            let word = PulseWord::new(letters).unwrap();
            if verify_eulerian(&word, &g).pass {
                eulerian += 1;
                assert!(verify_average_decoupling(&word, &Pauli::NON_IDENTITY), "{word}");
                let path = cumulative_path(&word, &GroupElement::identity());
                assert_eq!(path.last().unwrap().label(), I);
            }
        }
        assert!(eulerian > 0);
    }

    #[test]
    fn word_parsing() {
        assert_eq!("X,Y, X,Y".parse::<PulseWord>().unwrap(), PulseWord::xy4());
        assert_eq!("".parse::<PulseWord>().unwrap_err(), GroupError::EmptyWord);
        assert_eq!("XQ".parse::<PulseWord>().unwrap_err(), GroupError::InvalidLetter('Q'));
    }
}
