//! Seeded random surface-syntax bundles for round-trip testing.

#![allow(dead_code)]

use polity_core::dsl::{
    Bundle, ConstItem, EntityItem, EnumItem, Expr, Formula, Literal, PolicyItem, RuleItem, SchemaItem, TypeExpr,
};
use polity_core::CmpOp;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const STEMS: [&str; 8] = ["a", "srv", "port", "User", "x1", "net_b", "Zed", "p"];
const STRINGS: [&str; 6] = ["", "plain", "I'm PG 13", "quote \" inside", "back\\slash", "tab\tnew\nline"];

struct G {
    rng: StdRng,
}

impl G {
    fn ident(&mut self) -> String {
        // suffix keeps names clear of keywords and the built-in type names
        format!("{}{}", STEMS.choose(&mut self.rng).unwrap(), self.rng.gen_range(0..20))
    }

    fn idents(&mut self, max: usize) -> Vec<String> {
        let n = self.rng.gen_range(0..=max);
        (0..n).map(|_| self.ident()).collect()
    }

    fn ty(&mut self, depth: usize) -> TypeExpr {
        match self.rng.gen_range(0..if depth == 0 { 4 } else { 5 }) {
            0 => TypeExpr::Nat,
            1 => TypeExpr::Str,
            2 => TypeExpr::Bool,
            3 => TypeExpr::Named(self.ident()),
            _ => TypeExpr::List(Box::new(self.ty(depth - 1))),
        }
    }

    fn literal(&mut self, depth: usize, bare_idents: bool) -> Literal {
        match self.rng.gen_range(0..if depth == 0 { 5 } else { 6 }) {
            0 => Literal::Nat(self.rng.gen_range(0..1_000_000)),
            1 => Literal::Str(STRINGS.choose(&mut self.rng).unwrap().to_string()),
            2 => Literal::Bool(self.rng.gen_bool(0.5)),
            3 => Literal::Atom { enum_name: self.ident(), atom: self.ident() },
            4 if bare_idents => Literal::Ident(self.ident()),
            4 => Literal::Nat(0),
            _ => {
                let n = self.rng.gen_range(0..4);
                Literal::List((0..n).map(|_| self.literal(depth - 1, true)).collect())
            }
        }
    }

    fn expr(&mut self, depth: usize) -> Expr {
        match self.rng.gen_range(0..if depth == 0 { 3 } else { 4 }) {
            // a bare identifier in expression position is a variable
            0 => Expr::Lit(self.literal(1, false)),
            1 => Expr::Var(self.ident()),
            2 => Expr::Attr { var: self.ident(), path: self.ident() },
            _ => {
                let n = self.rng.gen_range(0..3);
                Expr::Call { name: self.ident(), args: (0..n).map(|_| self.expr(depth - 1)).collect() }
            }
        }
    }

    fn formula(&mut self, depth: usize) -> Formula {
        let leaf = depth == 0 || self.rng.gen_bool(0.3);
        if leaf {
            return match self.rng.gen_range(0..4) {
                0 => Formula::Cmp { lhs: self.expr(2), op: *CmpOp::ALL.choose(&mut self.rng).unwrap(), rhs: self.expr(2) },
                1 => Formula::In { elem: self.expr(2), set: self.expr(2) },
                2 => Formula::Disjoint { a: self.expr(2), b: self.expr(2) },
                _ => {
                    let n = self.rng.gen_range(0..3);
                    Formula::Apply { policy: self.ident(), args: (0..n).map(|_| self.expr(1)).collect() }
                }
            };
        }
        let sub = |g: &mut G| Box::new(g.formula(depth - 1));
        match self.rng.gen_range(0..5) {
            0 => Formula::And(sub(self), sub(self)),
            1 => Formula::Or(sub(self), sub(self)),
            2 => Formula::Not(sub(self)),
            3 => Formula::Exists { var: self.ident(), domain: self.ident(), body: sub(self) },
            _ => Formula::Forall { var: self.ident(), domain: self.ident(), body: sub(self) },
        }
    }

    fn bundle(&mut self) -> Bundle {
        let mut b = Bundle::default();
        for _ in 0..self.rng.gen_range(0..3) {
            b.enums.push(EnumItem { name: self.ident(), members: self.idents(5) });
        }
        for _ in 0..self.rng.gen_range(0..3) {
            let n = self.rng.gen_range(0..4);
            let fields = (0..n).map(|_| (self.ident(), self.ty(2))).collect();
            b.schemas.push(SchemaItem { kind: self.ident(), fields });
        }
        for _ in 0..self.rng.gen_range(0..3) {
            b.consts.push(ConstItem { name: self.ident(), ty: self.ty(2), value: self.literal(2, true) });
        }
        for _ in 0..self.rng.gen_range(0..3) {
            let n = self.rng.gen_range(0..4);
            let attrs = (0..n).map(|_| (self.ident(), self.literal(2, true))).collect();
            let id = self.rng.gen_bool(0.3).then(|| format!("urn:test:{}", self.ident()));
            b.entities.push(EntityItem { handle: self.ident(), kind: self.ident(), id, attrs });
        }
        for _ in 0..self.rng.gen_range(0..3) {
            let n = self.rng.gen_range(0..3);
            let params = (0..n).map(|_| (self.ident(), self.ident())).collect();
            let rules = (0..self.rng.gen_range(0..3)).map(|_| RuleItem { name: self.ident(), body: self.formula(4) }).collect();
            b.policies.push(PolicyItem { name: self.ident(), params, rules });
        }
        b
    }
}

pub fn bundle(seed: u64) -> Bundle {
    G { rng: StdRng::seed_from_u64(seed) }.bundle()
}
