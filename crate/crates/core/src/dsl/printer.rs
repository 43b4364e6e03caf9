use std::fmt::Write;

use super::ast::*;

/// Renders a bundle in canonical layout: enums, schemas, constants, entities,
/// then policies, with the minimal parentheses that preserve tree shape.
pub fn print(bundle: &Bundle) -> String {
    let mut out = String::new();
    let section = |out: &mut String, lines: Vec<String>| {
        if lines.is_empty() {
            return;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
    };
    section(&mut out, bundle.enums.iter().map(print_enum).collect());
    section(&mut out, bundle.schemas.iter().map(print_schema).collect());
    section(&mut out, bundle.consts.iter().map(print_const).collect());
    section(&mut out, bundle.entities.iter().map(print_entity).collect());
    let policies: Vec<String> = bundle.policies.iter().map(print_policy).collect();
    if !policies.is_empty() {
        section(&mut out, vec![policies.join("\n")]);
    }
    out
}

fn print_enum(e: &EnumItem) -> String {
    if e.members.is_empty() {
        format!("enum {} {{ }}", e.name)
    } else {
        format!("enum {} {{ {} }}", e.name, e.members.join(" "))
    }
}

fn print_schema(s: &SchemaItem) -> String {
    let fields: Vec<String> = s.fields.iter().map(|(n, t)| format!("{n}: {}", print_type(t))).collect();
    if fields.is_empty() {
        format!("schema {} {{ }}", s.kind)
    } else {
        format!("schema {} {{ {} }}", s.kind, fields.join(", "))
    }
}

fn print_type(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Nat => "Nat".into(),
        TypeExpr::Str => "Str".into(),
        TypeExpr::Bool => "Bool".into(),
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::List(inner) => format!("[{}]", print_type(inner)),
    }
}

fn print_const(c: &ConstItem) -> String {
    format!("let {}: {} = {};", c.name, print_type(&c.ty), print_literal(&c.value))
}

fn print_entity(e: &EntityItem) -> String {
    let mut s = format!("entity {} : {}", e.handle, e.kind);
    if let Some(id) = &e.id {
        write!(s, " id {}", quote(id)).unwrap();
    }
    if e.attrs.is_empty() {
        s.push_str(" { }");
    } else {
        let attrs: Vec<String> = e.attrs.iter().map(|(n, v)| format!("{n} = {}", print_literal(v))).collect();
        write!(s, " {{ {} }}", attrs.join(", ")).unwrap();
    }
    s
}

fn print_policy(p: &PolicyItem) -> String {
    let params: Vec<String> = p.params.iter().map(|(n, k)| format!("{n}: {k}")).collect();
    let mut s = format!("policy {}({}) {{\n", p.name, params.join(", "));
    for r in &p.rules {
        writeln!(s, "  rule {}: {};", r.name, print_formula(&r.body)).unwrap();
    }
    s.push('}');
    s
}

pub fn print_literal(l: &Literal) -> String {
    match l {
        Literal::Nat(n) => n.to_string(),
        Literal::Str(s) => quote(s),
        Literal::Bool(b) => b.to_string(),
        Literal::Atom { enum_name, atom } => format!("{enum_name}::{atom}"),
        Literal::Ident(i) => i.clone(),
        Literal::List(items) => {
            let items: Vec<String> = items.iter().map(print_literal).collect();
            format!("[{}]", items.join(", "))
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Lit(l) => print_literal(l),
        Expr::Var(v) => v.clone(),
        Expr::Attr { var, path } => format!("{var}.{path}"),
        Expr::Call { name, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            format!("{name}({})", args.join(", "))
        }
    }
}

pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    formula_prec(f, 0, &mut out);
    out
}

// context precedence: 0 top or quantifier body, 1 or-left, 2 or-right / and-left,
// 3 and-right / not operand
fn formula_prec(f: &Formula, ctx: u8, out: &mut String) {
    let own = match f {
        Formula::Or(..) => 1,
        Formula::And(..) => 2,
        Formula::Not(_) => 3,
        // a quantifier body extends as far right as possible
        Formula::Exists { .. } | Formula::Forall { .. } => 0,
        _ => 4,
    };
    let paren = if own == 0 { ctx > 0 } else { own < ctx };
    if paren {
        out.push('(');
    }
    match f {
        Formula::Cmp { lhs, op, rhs } => {
            write!(out, "{} {} {}", print_expr(lhs), op.symbol(), print_expr(rhs)).unwrap();
        }
        Formula::In { elem, set } => write!(out, "{} in {}", print_expr(elem), print_expr(set)).unwrap(),
        Formula::Disjoint { a, b } => write!(out, "{} disjoint {}", print_expr(a), print_expr(b)).unwrap(),
        Formula::Apply { policy, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            write!(out, "{policy}({})", args.join(", ")).unwrap();
        }
        Formula::Or(l, r) => {
            formula_prec(l, 1, out);
            out.push_str(" or ");
            formula_prec(r, 2, out);
        }
        Formula::And(l, r) => {
            formula_prec(l, 2, out);
            out.push_str(" and ");
            formula_prec(r, 3, out);
        }
        Formula::Not(sub) => {
            out.push_str("not ");
            formula_prec(sub, 3, out);
        }
        Formula::Exists { var, domain, body } | Formula::Forall { var, domain, body } => {
            let kw = if matches!(f, Formula::Exists { .. }) { "exists" } else { "forall" };
            write!(out, "{kw} {var}: {domain} . ").unwrap();
            formula_prec(body, 0, out);
        }
    }
    if paren {
        out.push(')');
    }
}
