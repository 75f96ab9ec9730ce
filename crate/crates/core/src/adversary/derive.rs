//! Symbolic reachability over a scheme's defining equations.
//!
//! Each equation relates a set of protocol values. Given the adversary's
//! starting set plus a password hypothesis, the closure repeatedly solves
//! equations for one unknown (XOR masks can be peeled off; hash preimages
//! cannot). An equation then serves as an offline password test exactly
//! when all of its values are known, at least one of them depends on the
//! password, and it was not itself used to derive any of them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::scheme::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    // secrets and intermediates
    Id,
    Pw,
    N,
    R,
    H,
    T1,
    T2,
    T3,
    T4,
    T5,
    A1,
    A2,
    A22,
    A4,
    A5,
    A55,
    A6,
    Sk,
    Ru,
    Rs,
    Bio,
    // card
    E,
    L,
    V,
    Y,
    M,
    Nmask,
    Pi,
    // wire
    Nid,
    A11,
    Ci,
    Q,
    Cs,
    A44,
    P,
    Q2,
}

/// One defining relation, with the ways it can be solved.
#[derive(Clone, Debug)]
pub struct Equation {
    pub name: &'static str,
    pub vars: Vec<Var>,
    /// `(output, inputs)` pairs the relation can be solved for.
    pub solves: Vec<(Var, Vec<Var>)>,
}

fn eq(name: &'static str, vars: &[Var], solves: &[(Var, &[Var])]) -> Equation {
    Equation {
        name,
        vars: vars.to_vec(),
        solves: solves.iter().map(|(o, i)| (*o, i.to_vec())).collect(),
    }
}

/// Defining equations of a scheme, in a fixed order.
pub fn equations(scheme: Scheme) -> Vec<Equation> {
    use Var::*;
    match scheme {
        Scheme::Baseline => vec![
            eq("R = Rep(B, P_i)", &[R, Bio, Pi], &[(R, &[Bio, Pi])]),
            eq("A1 = g^r_u", &[A1, Ru], &[(A1, &[Ru])]),
            eq("A2 = Y^r_u", &[A2, Y, Ru], &[(A2, &[Y, Ru])]),
            eq("NID = ID ^ A2", &[Nid, Id, A2], &[(Id, &[Nid, A2]), (A2, &[Nid, Id])]),
            eq("L = N ^ R", &[L, N, R], &[(N, &[L, R]), (R, &[L, N])]),
            eq("V = h(ID||PW||N)", &[V, Id, Pw, N], &[]),
            eq("e = H ^ h(PW||N)", &[E, H, Pw, N], &[(H, &[E, Pw, N])]),
            eq("C_i = h(ID||H||A1||A2||T1)", &[Ci, Id, H, A1, A2, T1], &[]),
            eq("A6 = A4^r_u", &[A6, A4, Ru], &[(A6, &[A4, Ru])]),
            eq("SK = h(ID||A2||A6||H||T1||T3)", &[Sk, Id, A2, A6, H, T1, T3], &[(Sk, &[Id, A2, A6, H, T1, T3])]),
            eq("Cs = h(ID||SK||H||T3)", &[Cs, Id, Sk, H, T3], &[]),
        ],
        Scheme::Improved => vec![
            eq("R = Rep(B, P_i)", &[R, Bio, Pi], &[(R, &[Bio, Pi])]),
            eq("A1 = g^r_u", &[A1, Ru], &[(A1, &[Ru])]),
            eq("A2 = Y^r_u", &[A2, Y, Ru], &[(A2, &[Y, Ru])]),
            eq("A4 = g^r_s", &[A4, Rs], &[(A4, &[Rs])]),
            eq("A5 = A1^r_s", &[A5, A1, Rs], &[(A5, &[A1, Rs])]),
            eq("Nmask = h(PW||R) ^ T2", &[Nmask, Pw, R, T2], &[(T2, &[Nmask, Pw, R])]),
            eq("M = h(ID ^ T2) ^ T1", &[M, Id, T2, T1], &[(T1, &[M, Id, T2])]),
            eq("L = N ^ R ^ T1", &[L, N, R, T1], &[(N, &[L, R, T1]), (T1, &[L, N, R])]),
            eq("V = h(ID||T1||PW||T2||N)", &[V, Id, T1, Pw, T2, N], &[]),
            eq("e = H ^ h(PW||N||T1)", &[E, H, Pw, N, T1], &[(H, &[E, Pw, N, T1])]),
            eq("A11 = A1 ^ T2 ^ T3", &[A11, A1, T2, T3], &[(T3, &[A11, A1, T2]), (T2, &[A11, A1, T3])]),
            eq("Q = T3 ^ h(T1)", &[Q, T3, T1], &[(T3, &[Q, T1])]),
            eq("A22 = A2 ^ T3", &[A22, A2, T3], &[(A22, &[A2, T3]), (T3, &[A22, A2])]),
            eq("NID = ID ^ A22 ^ h(T1||T3||T2)", &[Nid, Id, A22, T1, T3, T2], &[(Id, &[Nid, A22, T1, T3, T2])]),
            eq("C_i = h(ID||H||A22||A11||T1||T3||T2)", &[Ci, Id, H, A22, A11, T1, T3, T2], &[]),
            eq("A44 = A4 ^ T3 ^ T4", &[A44, A4, T3, T4], &[(T4, &[A44, A4, T3]), (T3, &[A44, A4, T4])]),
            eq("P = h(T1||ID||T3) ^ T4", &[P, T1, Id, T3, T4], &[(T4, &[P, T1, Id, T3])]),
            eq("Q2 = h(T2||ID||T3) ^ T5", &[Q2, T2, Id, T3, T5], &[(T5, &[Q2, T2, Id, T3])]),
            eq("A55 = A5 ^ T3 ^ T5", &[A55, A5, T3, T5], &[(A55, &[A5, T3, T5])]),
            eq("SK = h(ID||A22||A55||H||T1||T3||T5)", &[Sk, Id, A22, A55, H, T1, T3, T5], &[(Sk, &[Id, A22, A55, H, T1, T3, T5])]),
            eq("Cs = h(ID||SK||H||T2||T4)", &[Cs, Id, Sk, H, T2, T4], &[]),
        ],
    }
}

/// Values available under the insider model: card contents, the wire,
/// the biometric, and both session exponents.
pub fn insider_knowledge(scheme: Scheme) -> BTreeSet<Var> {
    use Var::*;
    let mut k: BTreeSet<Var> = [E, L, V, Y, Pi, Bio, R, Ru, Rs].into_iter().collect();
    match scheme {
        Scheme::Baseline => k.extend([Nid, A1, Ci, T1, Cs, A4, T3]),
        Scheme::Improved => k.extend([M, Nmask, Nid, A11, Ci, Q, Cs, A44, P, Q2]),
    }
    k
}

#[derive(Clone, Debug)]
struct Derived {
    pw_dependent: bool,
    via: BTreeSet<&'static str>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationTrace {
    pub equation: String,
    pub unknowns: Vec<Var>,
    pub usable_as_password_test: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reachability {
    /// Values derivable once a password is hypothesized.
    pub derivable: Vec<Var>,
    pub equations: Vec<EquationTrace>,
}

impl Reachability {
    pub fn has_password_test(&self) -> bool {
        self.equations.iter().any(|e| e.usable_as_password_test)
    }

    pub fn knows(&self, v: Var) -> bool {
        self.derivable.contains(&v)
    }
}

/// Closure of `known ∪ {PW}` under the scheme's equations.
pub fn analyze(scheme: Scheme, known: &BTreeSet<Var>) -> Reachability {
    let eqs = equations(scheme);
    let mut state: BTreeMap<Var, Derived> = known
        .iter()
        .map(|v| (*v, Derived { pw_dependent: false, via: BTreeSet::new() }))
        .collect();
    state.insert(Var::Pw, Derived { pw_dependent: true, via: BTreeSet::new() });

    loop {
        let mut progressed = false;
        for e in &eqs {
            for (out, inputs) in &e.solves {
                if state.contains_key(out) || !inputs.iter().all(|i| state.contains_key(i)) {
                    continue;
                }
                let mut via: BTreeSet<&'static str> = BTreeSet::from([e.name]);
                let mut pw_dependent = false;
                for i in inputs {
                    let d = &state[i];
                    pw_dependent |= d.pw_dependent;
                    via.extend(d.via.iter().copied());
                }
                state.insert(*out, Derived { pw_dependent, via });
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let equations = eqs
        .iter()
        .map(|e| {
            let unknowns: Vec<Var> = e.vars.iter().copied().filter(|v| !state.contains_key(v)).collect();
            let usable = unknowns.is_empty()
                && e.vars.iter().any(|v| state[v].pw_dependent)
                && e.vars.iter().all(|v| !state[v].via.contains(e.name));
            EquationTrace { equation: e.name.to_string(), unknowns, usable_as_password_test: usable }
        })
        .collect();
    Reachability { derivable: state.keys().copied().collect(), equations }
}
