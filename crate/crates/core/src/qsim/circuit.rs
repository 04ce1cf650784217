use std::fmt::Write as _;

use crate::error::{ensure, QlleError, Result};
use crate::linalg::{c, CMatrix, C64};
use crate::qsim::state::StateVector;

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    /// `diag(1, e^{i theta})`.
    Phase { target: usize, theta: f64 },
    CPhase { control: usize, target: usize, theta: f64 },
    Ry { target: usize, theta: f64 },
    CRy { control: usize, target: usize, theta: f64 },
    Swap(usize, usize),
    /// Dense unitary on `targets` (first target is the least significant
    /// bit of the matrix index), applied when every control reads 1.
    Unitary {
        targets: Vec<usize>,
        controls: Vec<usize>,
        matrix: CMatrix,
    },
    /// Uniformly controlled Ry: rotates `target` by `angles[v]` where `v`
    /// is the value held by the `select` register (first qubit least
    /// significant).
    UcRy {
        target: usize,
        select: Vec<usize>,
        angles: Vec<f64>,
    },
}

impl Gate {
    fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(t) | Gate::X(t) => vec![*t],
            Gate::Phase { target, .. } | Gate::Ry { target, .. } => vec![*target],
            Gate::CPhase { control, target, .. } | Gate::CRy { control, target, .. } => {
                vec![*target, *control]
            }
            Gate::Swap(a, b) => vec![*a, *b],
            Gate::Unitary { targets, controls, .. } => {
                targets.iter().chain(controls).copied().collect()
            }
            Gate::UcRy { target, select, .. } => {
                std::iter::once(*target).chain(select.iter().copied()).collect()
            }
        }
    }

    pub fn inverse(&self) -> Gate {
        match self {
            Gate::H(_) | Gate::X(_) | Gate::Swap(..) => self.clone(),
            Gate::Phase { target, theta } => Gate::Phase { target: *target, theta: -theta },
            Gate::CPhase { control, target, theta } => Gate::CPhase {
                control: *control,
                target: *target,
                theta: -theta,
            },
            Gate::Ry { target, theta } => Gate::Ry { target: *target, theta: -theta },
            Gate::CRy { control, target, theta } => Gate::CRy {
                control: *control,
                target: *target,
                theta: -theta,
            },
            Gate::Unitary { targets, controls, matrix } => Gate::Unitary {
                targets: targets.clone(),
                controls: controls.clone(),
                matrix: matrix.adjoint(),
            },
            Gate::UcRy { target, select, angles } => Gate::UcRy {
                target: *target,
                select: select.clone(),
                angles: angles.iter().map(|a| -a).collect(),
            },
        }
    }
}

fn ry_matrix(theta: f64) -> [[C64; 2]; 2] {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

fn apply_single(amps: &mut [C64], target: usize, cmask: usize, m: [[C64; 2]; 2]) {
    let tbit = 1usize << target;
    for i in 0..amps.len() {
        if i & tbit != 0 || i & cmask != cmask {
            continue;
        }
        let (a0, a1) = (amps[i], amps[i | tbit]);
        amps[i] = m[0][0] * a0 + m[0][1] * a1;
        amps[i | tbit] = m[1][0] * a0 + m[1][1] * a1;
    }
}

fn apply_dense(amps: &mut [C64], targets: &[usize], controls: &[usize], u: &CMatrix) {
    let k = targets.len();
    let tmask: usize = targets.iter().map(|t| 1usize << t).sum();
    let cmask: usize = controls.iter().map(|t| 1usize << t).sum();
    let offsets: Vec<usize> = (0..1usize << k)
        .map(|s| (0..k).filter(|b| s >> b & 1 == 1).map(|b| 1usize << targets[b]).sum())
        .collect();
    let mut buf = vec![C64::new(0.0, 0.0); offsets.len()];
    for base in 0..amps.len() {
        if base & tmask != 0 || base & cmask != cmask {
            continue;
        }
        for (slot, off) in buf.iter_mut().zip(&offsets) {
            *slot = amps[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            amps[base | off] = buf.iter().enumerate().map(|(s, a)| u[(r, s)] * a).sum();
        }
    }
}

fn apply_gate(amps: &mut [C64], gate: &Gate) {
    match gate {
        Gate::H(t) => {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            apply_single(amps, *t, 0, [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]);
        }
        Gate::X(t) => {
            let tbit = 1usize << t;
            for i in 0..amps.len() {
                if i & tbit == 0 {
                    amps.swap(i, i | tbit);
                }
            }
        }
        Gate::Phase { target, theta } => phase(amps, 1 << target, *theta),
        Gate::CPhase { control, target, theta } => phase(amps, (1 << target) | (1 << control), *theta),
        Gate::Ry { target, theta } => apply_single(amps, *target, 0, ry_matrix(*theta)),
        Gate::CRy { control, target, theta } => {
            apply_single(amps, *target, 1 << control, ry_matrix(*theta))
        }
        Gate::Swap(a, b) => {
            let (ba, bb) = (1usize << a, 1usize << b);
            for i in 0..amps.len() {
                if i & ba != 0 && i & bb == 0 {
                    amps.swap(i, (i & !ba) | bb);
                }
            }
        }
        Gate::Unitary { targets, controls, matrix } => apply_dense(amps, targets, controls, matrix),
        Gate::UcRy { target, select, angles } => {
            let tbit = 1usize << target;
            let rots: Vec<_> = angles.iter().map(|a| ry_matrix(*a)).collect();
            for i in 0..amps.len() {
                if i & tbit != 0 {
                    continue;
                }
                let v = select
                    .iter()
                    .enumerate()
                    .map(|(b, q)| (i >> q & 1) << b)
                    .sum::<usize>();
                let m = &rots[v];
                let (a0, a1) = (amps[i], amps[i | tbit]);
                amps[i] = m[0][0] * a0 + m[0][1] * a1;
                amps[i | tbit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }
}

/// Multiplies by `e^{i theta}` every amplitude whose index has all `mask`
/// bits set.
fn phase(amps: &mut [C64], mask: usize, theta: f64) {
    let z = C64::from_polar(1.0, theta);
    for (i, a) in amps.iter_mut().enumerate() {
        if i & mask == mask {
            *a *= z;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(qubits: usize) -> Self {
        Circuit {
            qubits,
            gates: Vec::new(),
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let qs = gate.qubits();
        for (i, q) in qs.iter().enumerate() {
            ensure!(*q < self.qubits, "gate {gate:?} acts on qubit {q} of a {}-qubit circuit", self.qubits);
            ensure!(!qs[..i].contains(q), "gate {gate:?} repeats qubit {q}");
        }
        match &gate {
            Gate::Unitary { targets, matrix, .. } => {
                let dim = 1usize << targets.len();
                ensure!(
                    matrix.nrows() == dim && matrix.ncols() == dim,
                    "unitary on {} qubits must be {dim}x{dim}",
                    targets.len()
                );
                let defect = (matrix.adjoint() * matrix - CMatrix::identity(dim, dim)).camax();
                ensure!(defect <= 1e-9, "matrix is not unitary (defect {defect:e})");
            }
            Gate::UcRy { select, angles, .. } => ensure!(
                angles.len() == 1 << select.len(),
                "uniformly controlled rotation needs {} angles, got {}",
                1 << select.len(),
                angles.len()
            ),
            _ => {}
        }
        self.gates.push(gate);
        Ok(self)
    }

    /// Appends `other`, mapping its qubit `p` to `offset + p`.
    pub fn append(&mut self, other: &Circuit, offset: usize) -> Result<&mut Self> {
        for g in &other.gates {
            self.push(shift(g, offset))?;
        }
        Ok(self)
    }

    pub fn inverse(&self) -> Circuit {
        Circuit {
            qubits: self.qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        ensure!(
            state.qubits() == self.qubits,
            "circuit has {} qubits, state has {}",
            self.qubits,
            state.qubits()
        );
        let mut out = state.clone();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, state: &mut StateVector) {
        let amps = state.amps_mut().as_mut_slice();
        for g in &self.gates {
            apply_gate(amps, g);
        }
    }

    /// One gate per line: `GATE targets... [controls...] [angle]`. Dense
    /// unitaries append their row-major entries as `{re,im;re,im;...}` and
    /// uniformly controlled rotations their angle table as `{a;b;...}`.
    pub fn to_text(&self) -> String {
        let mut out = format!("QUBITS {}\n", self.qubits);
        for g in &self.gates {
            let line = match g {
                Gate::H(t) => format!("H {t}"),
                Gate::X(t) => format!("X {t}"),
                Gate::Phase { target, theta } => format!("P {target} {theta:?}"),
                Gate::CPhase { control, target, theta } => format!("CP {target} [{control}] {theta:?}"),
                Gate::Ry { target, theta } => format!("RY {target} {theta:?}"),
                Gate::CRy { control, target, theta } => format!("CRY {target} [{control}] {theta:?}"),
                Gate::Swap(a, b) => format!("SWAP {a} {b}"),
                Gate::Unitary { targets, controls, matrix } => {
                    let mut s = format!("U {} [{}] {{", join(targets), join(controls));
                    for r in 0..matrix.nrows() {
                        for col in 0..matrix.ncols() {
                            let z = matrix[(r, col)];
                            let sep = if r == 0 && col == 0 { "" } else { ";" };
                            let _ = write!(s, "{sep}{:?},{:?}", z.re, z.im);
                        }
                    }
                    s.push('}');
                    s
                }
                Gate::UcRy { target, select, angles } => {
                    let a: Vec<String> = angles.iter().map(|a| format!("{a:?}")).collect();
                    format!("UCRY {target} [{}] {{{}}}", join(select), a.join(";"))
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty circuit text"))?;
        let qubits = header
            .trim()
            .strip_prefix("QUBITS ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| parse_err(1, "expected `QUBITS <n>` header"))?;
        let mut circuit = Circuit::new(qubits);
        for (no, line) in lines {
            let gate = parse_gate(line).map_err(|m| parse_err(no + 1, &m))?;
            circuit.push(gate).map_err(|e| parse_err(no + 1, &e.to_string()))?;
        }
        Ok(circuit)
    }
}

fn parse_err(row: usize, message: &str) -> QlleError {
    QlleError::Parse {
        row,
        column: 0,
        message: message.to_string(),
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_gate(line: &str) -> std::result::Result<Gate, String> {
    let line = line.trim();
    let (body, payload) = match line.find('{') {
        Some(p) => {
            let end = line.rfind('}').ok_or("unterminated `{`")?;
            (&line[..p], Some(&line[p + 1..end]))
        }
        None => (line, None),
    };
    let (head, controls, tail) = match (body.find('['), body.find(']')) {
        (Some(a), Some(b)) if a < b => (&body[..a], nums(&body[a + 1..b])?, body[b + 1..].trim()),
        (None, None) => (body, Vec::new(), ""),
        _ => return Err("unbalanced `[`".into()),
    };
    let mut words = head.split_whitespace();
    let name = words.next().ok_or("missing gate name")?;
    let rest: Vec<&str> = words.collect();
    let angle = |tok: Option<&&str>| -> std::result::Result<f64, String> {
        tok.ok_or_else(|| "missing angle".to_string())?
            .parse::<f64>()
            .map_err(|e| e.to_string())
    };
    let targets = |toks: &[&str]| nums(&toks.join(" "));
    let one = |v: Vec<usize>| -> std::result::Result<usize, String> {
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(format!("expected one qubit, found {}", v.len())),
        }
    };
    let ctrl = || one(controls.clone());
    Ok(match name {
        "H" => Gate::H(one(targets(&rest)?)?),
        "X" => Gate::X(one(targets(&rest)?)?),
        "P" => Gate::Phase {
            target: one(targets(&rest[..rest.len().saturating_sub(1)])?)?,
            theta: angle(rest.last())?,
        },
        "RY" => Gate::Ry {
            target: one(targets(&rest[..rest.len().saturating_sub(1)])?)?,
            theta: angle(rest.last())?,
        },
        "CP" => Gate::CPhase {
            control: ctrl()?,
            target: one(targets(&rest)?)?,
            theta: angle(Some(&tail))?,
        },
        "CRY" => Gate::CRy {
            control: ctrl()?,
            target: one(targets(&rest)?)?,
            theta: angle(Some(&tail))?,
        },
        "SWAP" => match targets(&rest)?.as_slice() {
            [a, b] => Gate::Swap(*a, *b),
            _ => return Err("SWAP takes two qubits".into()),
        },
        "U" => {
            let targets = targets(&rest)?;
            let entries: Vec<C64> = payload
                .ok_or("missing matrix")?
                .split(';')
                .map(|z| {
                    let (re, im) = z.split_once(',').ok_or("entry must be `re,im`")?;
                    Ok(c(
                        re.trim().parse().map_err(|e: std::num::ParseFloatError| e.to_string())?,
                        im.trim().parse().map_err(|e: std::num::ParseFloatError| e.to_string())?,
                    ))
                })
                .collect::<std::result::Result<_, String>>()?;
            let dim = 1usize << targets.len();
            if entries.len() != dim * dim {
                return Err(format!("expected {} matrix entries, got {}", dim * dim, entries.len()));
            }
            Gate::Unitary {
                targets,
                controls,
                matrix: CMatrix::from_row_slice(dim, dim, &entries),
            }
        }
        "UCRY" => Gate::UcRy {
            target: one(targets(&rest)?)?,
            select: controls,
            angles: payload
                .ok_or("missing angle table")?
                .split(';')
                .map(|a| a.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?,
        },
        other => return Err(format!("unknown gate `{other}`")),
    })
}

fn nums(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| format!("`{t}` is not a qubit index")))
        .collect()
}

fn shift(g: &Gate, o: usize) -> Gate {
    let m = |v: &[usize]| v.iter().map(|q| q + o).collect::<Vec<_>>();
    match g {
        Gate::H(t) => Gate::H(t + o),
        Gate::X(t) => Gate::X(t + o),
        Gate::Phase { target, theta } => Gate::Phase { target: target + o, theta: *theta },
        Gate::CPhase { control, target, theta } => Gate::CPhase {
            control: control + o,
            target: target + o,
            theta: *theta,
        },
        Gate::Ry { target, theta } => Gate::Ry { target: target + o, theta: *theta },
        Gate::CRy { control, target, theta } => Gate::CRy {
            control: control + o,
            target: target + o,
            theta: *theta,
        },
        Gate::Swap(a, b) => Gate::Swap(a + o, b + o),
        Gate::Unitary { targets, controls, matrix } => Gate::Unitary {
            targets: m(targets),
            controls: m(controls),
            matrix: matrix.clone(),
        },
        Gate::UcRy { target, select, angles } => Gate::UcRy {
            target: target + o,
            select: m(select),
            angles: angles.clone(),
        },
    }
}
