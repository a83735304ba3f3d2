//! Seeded generator of labeled compact-format AST projects.
//!
//! Defective projects withdraw ether with a low-level
//! `call{value: amount}("")` before zeroing the balance; clean projects
//! update the balance first and use `transfer`. The `FunctionCallOptions`
//! node of the low-level call is the only node kind unique to defective
//! projects. Some clean projects are near-empty contracts. A share of
//! projects have a second source unit (`Token`) that the vault calls into.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::ast::DefectCategory;
use crate::pipeline::{ProjectMeta, PROJECT_META_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub projects: usize,
    pub seed: u64,
    /// Share of projects with a second, called contract.
    pub cross_contract_rate: f64,
    /// Share of clean projects that are near-empty contracts.
    pub minimal_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { projects: 200, seed: 7, cross_contract_rate: 0.3, minimal_rate: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDocument {
    pub file_name: String,
    pub ast: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProject {
    pub project_id: String,
    pub meta: ProjectMeta,
    pub documents: Vec<SynthDocument>,
}

/// Ids are handed out in construction order; spans are assigned afterwards
/// by [`assign_spans`].
struct Builder {
    next_id: i64,
}

fn type_desc(t: &str) -> Value {
    json!({ "typeIdentifier": t.replace(' ', "_"), "typeString": t })
}

impl Builder {
    fn node(&mut self, kind: &str, fields: Value) -> Value {
        let id = self.next_id;
        self.next_id += 1;
        let mut obj = Map::new();
        obj.insert("id".into(), json!(id));
        obj.insert("nodeType".into(), json!(kind));
        obj.insert("src".into(), json!("0:0:0"));
        if let Value::Object(rest) = fields {
            obj.extend(rest);
        }
        Value::Object(obj)
    }

    fn ident(&mut self, name: &str, decl: i64, ty: &str) -> Value {
        self.node("Identifier", json!({ "name": name, "referencedDeclaration": decl, "typeDescriptions": type_desc(ty) }))
    }

    fn literal(&mut self, value: &str, ty: &str) -> Value {
        self.node("Literal", json!({ "kind": "number", "value": value, "typeDescriptions": type_desc(ty) }))
    }

    fn member(&mut self, base: Value, name: &str, ty: &str) -> Value {
        self.node("MemberAccess", json!({ "expression": base, "memberName": name, "typeDescriptions": type_desc(ty) }))
    }

    fn msg_sender(&mut self) -> Value {
        let msg = self.ident("msg", -15, "msg");
        self.member(msg, "sender", "address")
    }

    fn index(&mut self, base: Value, index: Value) -> Value {
        self.node("IndexAccess", json!({ "baseExpression": base, "indexExpression": index, "typeDescriptions": type_desc("uint256") }))
    }

    fn call(&mut self, callee: Value, args: Vec<Value>, ty: &str) -> Value {
        self.node("FunctionCall", json!({ "expression": callee, "arguments": args, "kind": "functionCall", "typeDescriptions": type_desc(ty) }))
    }

    fn binary(&mut self, lhs: Value, op: &str, rhs: Value, ty: &str) -> Value {
        self.node("BinaryOperation", json!({ "leftExpression": lhs, "operator": op, "rightExpression": rhs, "typeDescriptions": type_desc(ty) }))
    }

    fn expr_stmt(&mut self, expr: Value) -> Value {
        self.node("ExpressionStatement", json!({ "expression": expr }))
    }

    fn assign(&mut self, lhs: Value, op: &str, rhs: Value) -> Value {
        let a = self.node("Assignment", json!({ "leftHandSide": lhs, "operator": op, "rightHandSide": rhs, "typeDescriptions": type_desc("uint256") }));
        self.expr_stmt(a)
    }

    fn require(&mut self, cond: Value) -> Value {
        let callee = self.ident("require", -18, "function (bool) pure");
        let c = self.call(callee, vec![cond], "tuple()");
        self.expr_stmt(c)
    }

    fn var(&mut self, name: &str, ty: &str, state: bool) -> Value {
        let type_name = self.node("ElementaryTypeName", json!({ "name": ty, "typeDescriptions": type_desc(ty) }));
        self.node(
            "VariableDeclaration",
            json!({ "name": name, "stateVariable": state, "typeName": type_name, "typeDescriptions": type_desc(ty) }),
        )
    }

    fn params(&mut self, vars: Vec<Value>) -> Value {
        self.node("ParameterList", json!({ "parameters": vars }))
    }

    fn block(&mut self, statements: Vec<Value>) -> Value {
        self.node("Block", json!({ "statements": statements }))
    }

    fn function(&mut self, name: &str, params: Vec<Value>, returns: Vec<Value>, body: Vec<Value>, mutability: &str) -> Value {
        let p = self.params(params);
        let r = self.params(returns);
        let b = self.block(body);
        self.node(
            "FunctionDefinition",
            json!({ "name": name, "kind": "function", "visibility": "public", "stateMutability": mutability,
                    "parameters": p, "returnParameters": r, "body": b }),
        )
    }

    fn source_unit(&mut self, path: &str, contracts: Vec<Value>) -> Value {
        let pragma = self.node("PragmaDirective", json!({ "literals": ["solidity", "^", "0.8", ".0"] }));
        let mut nodes = vec![pragma];
        nodes.extend(contracts);
        self.node("SourceUnit", json!({ "absolutePath": path, "nodes": nodes }))
    }
}

/// Preorder span assignment: a node spans all of its descendants, leaves get
/// a fixed width.
fn assign_spans(value: &mut Value, cursor: &mut u64) {
    match value {
        Value::Object(obj) => {
            let is_node = obj.contains_key("id");
            let start = *cursor;
            let before = *cursor;
            for (key, child) in obj.iter_mut() {
                if key != "src" {
                    assign_spans(child, cursor);
                }
            }
            if is_node {
                if *cursor == before {
                    *cursor += 8;
                }
                obj.insert("src".into(), json!(format!("{start}:{}:0", *cursor - start)));
                *cursor += 1;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| assign_spans(v, cursor)),
        _ => {}
    }
}

struct Vault {
    balances: i64,
    owner: i64,
    paused: i64,
    token: Option<i64>,
}

fn balance_of_sender(b: &mut Builder, v: &Vault) -> Value {
    let base = b.ident("balances", v.balances, "mapping(address => uint256)");
    let sender = b.msg_sender();
    b.index(base, sender)
}

/// `require(balances[msg.sender] >= amount)`.
fn require_funds(b: &mut Builder, v: &Vault, amount: i64) -> Value {
    let bal = balance_of_sender(b, v);
    let amt = b.ident("amount", amount, "uint256");
    let cond = b.binary(bal, ">=", amt, "bool");
    b.require(cond)
}

fn payable_sender(b: &mut Builder) -> Value {
    let conv = b.node("ElementaryTypeNameExpression", json!({ "typeName": { "name": "address", "stateMutability": "payable" } }));
    let sender = b.msg_sender();
    b.call(conv, vec![sender], "address payable")
}

/// Low-level call before the state update.
fn unsafe_withdraw(b: &mut Builder, v: &Vault, name: &str) -> Value {
    let amount_decl = b.var("amount", "uint256", false);
    let amount = amount_decl["id"].as_i64().expect("id");
    let check = require_funds(b, v, amount);

    let ok_decl = b.var("ok", "bool", false);
    let ok = ok_decl["id"].as_i64().expect("id");
    let target = payable_sender(b);
    let member = b.member(target, "call", "function (bytes memory) payable returns (bool,bytes memory)");
    let value = b.ident("amount", amount, "uint256");
    let options = b.node("FunctionCallOptions", json!({ "expression": member, "names": ["value"], "options": [value] }));
    let empty = b.literal("", "literal_string \"\"");
    let low_level = b.call(options, vec![empty], "tuple(bool,bytes memory)");
    let decl_stmt = b.node(
        "VariableDeclarationStatement",
        json!({ "assignments": [ok], "declarations": [ok_decl, null], "initialValue": low_level }),
    );
    let ok_ref = b.ident("ok", ok, "bool");
    let check_ok = b.require(ok_ref);

    let bal = balance_of_sender(b, v);
    let amt = b.ident("amount", amount, "uint256");
    let update = b.assign(bal, "-=", amt);
    b.function(name, vec![amount_decl], vec![], vec![check, decl_stmt, check_ok, update], "nonpayable")
}

/// State update first, then `transfer`.
fn safe_withdraw(b: &mut Builder, v: &Vault, name: &str) -> Value {
    let amount_decl = b.var("amount", "uint256", false);
    let amount = amount_decl["id"].as_i64().expect("id");
    let check = require_funds(b, v, amount);
    let bal = balance_of_sender(b, v);
    let amt = b.ident("amount", amount, "uint256");
    let update = b.assign(bal, "-=", amt);
    let target = payable_sender(b);
    let member = b.member(target, "transfer", "function (uint256)");
    let amt = b.ident("amount", amount, "uint256");
    let send = b.call(member, vec![amt], "tuple()");
    let send = b.expr_stmt(send);
    b.function(name, vec![amount_decl], vec![], vec![check, update, send], "nonpayable")
}

fn deposit(b: &mut Builder, v: &Vault) -> Value {
    let bal = balance_of_sender(b, v);
    let msg = b.ident("msg", -15, "msg");
    let value = b.member(msg, "value", "uint256");
    let update = b.assign(bal, "+=", value);
    b.function("deposit", vec![], vec![], vec![update], "payable")
}

fn filler(b: &mut Builder, v: &Vault, which: usize, helper: i64) -> Value {
    match which {
        0 => {
            let who = b.var("who", "address", false);
            let who_id = who["id"].as_i64().expect("id");
            let ret = b.var("", "uint256", false);
            let base = b.ident("balances", v.balances, "mapping(address => uint256)");
            let key = b.ident("who", who_id, "address");
            let idx = b.index(base, key);
            let r = b.node("Return", json!({ "expression": idx }));
            b.function("balanceOf", vec![who], vec![ret], vec![r], "view")
        }
        1 => {
            let next = b.var("next", "address", false);
            let next_id = next["id"].as_i64().expect("id");
            let sender = b.msg_sender();
            let owner = b.ident("owner", v.owner, "address");
            let cond = b.binary(sender, "==", owner, "bool");
            let guard = b.require(cond);
            let owner = b.ident("owner", v.owner, "address");
            let val = b.ident("next", next_id, "address");
            let set = b.assign(owner, "=", val);
            b.function("setOwner", vec![next], vec![], vec![guard, set], "nonpayable")
        }
        2 => {
            let paused = b.ident("paused", v.paused, "bool");
            let not = b.node("UnaryOperation", json!({ "operator": "!", "prefix": true, "subExpression": paused, "typeDescriptions": type_desc("bool") }));
            let target = b.ident("paused", v.paused, "bool");
            let set = b.assign(target, "=", not);
            let sender = b.msg_sender();
            let owner = b.ident("owner", v.owner, "address");
            let cond = b.binary(sender, "==", owner, "bool");
            let body = b.block(vec![set]);
            let branch = b.node("IfStatement", json!({ "condition": cond, "trueBody": body }));
            b.function("togglePause", vec![], vec![], vec![branch], "nonpayable")
        }
        3 => {
            let n = b.var("n", "uint256", false);
            let n_id = n["id"].as_i64().expect("id");
            let ret = b.var("", "uint256", false);
            let acc_decl = b.var("acc", "uint256", false);
            let acc = acc_decl["id"].as_i64().expect("id");
            let zero = b.literal("0", "int_const 0");
            let init = b.node("VariableDeclarationStatement", json!({ "assignments": [acc], "declarations": [acc_decl], "initialValue": zero }));
            let i_decl = b.var("i", "uint256", false);
            let i = i_decl["id"].as_i64().expect("id");
            let zero = b.literal("0", "int_const 0");
            let loop_init = b.node("VariableDeclarationStatement", json!({ "assignments": [i], "declarations": [i_decl], "initialValue": zero }));
            let iv = b.ident("i", i, "uint256");
            let nv = b.ident("n", n_id, "uint256");
            let cond = b.binary(iv, "<", nv, "bool");
            let iv = b.ident("i", i, "uint256");
            let inc = b.node("UnaryOperation", json!({ "operator": "++", "prefix": false, "subExpression": iv, "typeDescriptions": type_desc("uint256") }));
            let inc = b.expr_stmt(inc);
            let acc_ref = b.ident("acc", acc, "uint256");
            let iv = b.ident("i", i, "uint256");
            let add = b.assign(acc_ref, "+=", iv);
            let body = b.block(vec![add]);
            let for_stmt = b.node(
                "ForStatement",
                json!({ "initializationExpression": loop_init, "condition": cond, "loopExpression": inc, "body": body }),
            );
            let acc_ref = b.ident("acc", acc, "uint256");
            let r = b.node("Return", json!({ "expression": acc_ref }));
            b.function("sumTo", vec![n], vec![ret], vec![init, for_stmt, r], "pure")
        }
        4 => {
            let x = b.var("x", "uint256", false);
            let x_id = x["id"].as_i64().expect("id");
            let ret = b.var("", "uint256", false);
            let callee = b.ident("helper", helper, "function (uint256) pure returns (uint256)");
            let arg = b.ident("x", x_id, "uint256");
            let c = b.call(callee, vec![arg], "uint256");
            let r = b.node("Return", json!({ "expression": c }));
            b.function("scaled", vec![x], vec![ret], vec![r], "pure")
        }
        _ => {
            let amount = b.var("amount", "uint256", false);
            let amount_id = amount["id"].as_i64().expect("id");
            let ev_params = b.var("amount", "uint256", false);
            let ev_list = b.params(vec![ev_params]);
            let ev = b.node("EventDefinition", json!({ "name": "Noted", "parameters": ev_list }));
            let ev_id = ev["id"].as_i64().expect("id");
            let callee = b.ident("Noted", ev_id, "function (uint256)");
            let arg = b.ident("amount", amount_id, "uint256");
            let c = b.call(callee, vec![arg], "tuple()");
            let emit = b.node("EmitStatement", json!({ "eventCall": c }));
            let f = b.function("note", vec![amount], vec![], vec![emit], "nonpayable");
            // the event definition travels with the function that emits it
            json!([ev, f])
        }
    }
}

fn helper_fn(b: &mut Builder) -> Value {
    let x = b.var("x", "uint256", false);
    let x_id = x["id"].as_i64().expect("id");
    let ret = b.var("", "uint256", false);
    let xv = b.ident("x", x_id, "uint256");
    let two = b.literal("2", "int_const 2");
    let mul = b.binary(xv, "*", two, "uint256");
    let r = b.node("Return", json!({ "expression": mul }));
    b.function("helper", vec![x], vec![ret], vec![r], "pure")
}

fn payout(b: &mut Builder, v: &Vault, token: i64) -> Value {
    let to = b.var("to", "address", false);
    let to_id = to["id"].as_i64().expect("id");
    let amount = b.var("amount", "uint256", false);
    let amount_id = amount["id"].as_i64().expect("id");
    let sender = b.msg_sender();
    let owner = b.ident("owner", v.owner, "address");
    let cond = b.binary(sender, "==", owner, "bool");
    let guard = b.require(cond);
    let base = b.ident("token", token, "contract Token");
    let member = b.member(base, "transfer", "function (address,uint256) external returns (bool)");
    let a = b.ident("to", to_id, "address");
    let c = b.ident("amount", amount_id, "uint256");
    let call = b.call(member, vec![a, c], "bool");
    let stmt = b.expr_stmt(call);
    b.function("payout", vec![to, amount], vec![], vec![guard, stmt], "nonpayable")
}

fn token_unit(b: &mut Builder) -> Value {
    let bal = b.var("balanceOf", "mapping(address => uint256)", true);
    let bal_id = bal["id"].as_i64().expect("id");
    let to = b.var("to", "address", false);
    let to_id = to["id"].as_i64().expect("id");
    let amount = b.var("amount", "uint256", false);
    let amount_id = amount["id"].as_i64().expect("id");
    let ret = b.var("", "bool", false);

    let base = b.ident("balanceOf", bal_id, "mapping(address => uint256)");
    let sender = b.msg_sender();
    let from = b.index(base, sender);
    let amt = b.ident("amount", amount_id, "uint256");
    let debit = b.assign(from, "-=", amt);
    let base = b.ident("balanceOf", bal_id, "mapping(address => uint256)");
    let key = b.ident("to", to_id, "address");
    let dest = b.index(base, key);
    let amt = b.ident("amount", amount_id, "uint256");
    let credit = b.assign(dest, "+=", amt);
    let yes = b.literal("true", "bool");
    let r = b.node("Return", json!({ "expression": yes }));
    let transfer = b.function("transfer", vec![to, amount], vec![ret], vec![debit, credit, r], "nonpayable");
    let contract = b.node("ContractDefinition", json!({ "name": "Token", "contractKind": "contract", "nodes": [bal, transfer] }));
    b.source_unit("contracts/Token.sol", vec![contract])
}

fn vault_unit(b: &mut Builder, rng: &mut ChaCha8Rng, defective: bool, minimal: bool, cross: bool) -> Value {
    let mut members = Vec::new();
    let balances = b.var("balances", "mapping(address => uint256)", true);
    let owner = b.var("owner", "address", true);
    let paused = b.var("paused", "bool", true);
    let v = Vault {
        balances: balances["id"].as_i64().expect("id"),
        owner: owner["id"].as_i64().expect("id"),
        paused: paused["id"].as_i64().expect("id"),
        token: None,
    };
    members.extend([balances, owner, paused]);
    let mut v = v;
    if cross {
        let token = b.var("token", "contract Token", true);
        v.token = token["id"].as_i64();
        members.push(token);
    }

    if minimal {
        if rng.gen_bool(0.5) {
            let helper = helper_fn(b);
            members.push(helper);
        }
    } else {
        let helper = helper_fn(b);
        let helper_id = helper["id"].as_i64().expect("id");
        members.push(helper);
        members.push(deposit(b, &v));
        members.push(if defective { unsafe_withdraw(b, &v, "withdraw") } else { safe_withdraw(b, &v, "withdraw") });
        if rng.gen_bool(0.3) {
            let name = "withdrawAll";
            members.push(if defective { unsafe_withdraw(b, &v, name) } else { safe_withdraw(b, &v, name) });
        }
        let mut pool: Vec<usize> = (0..6).collect();
        pool.shuffle(rng);
        let extra = rng.gen_range(1..=4);
        for &which in &pool[..extra] {
            match filler(b, &v, which, helper_id) {
                Value::Array(items) => members.extend(items),
                f => members.push(f),
            }
        }
        if let Some(token) = v.token {
            members.push(payout(b, &v, token));
        }
    }
    let contract = b.node("ContractDefinition", json!({ "name": "Vault", "contractKind": "contract", "nodes": members }));
    b.source_unit("contracts/Vault.sol", vec![contract])
}

/// Generates `config.projects` projects, alternating defective and clean.
pub fn generate_corpus(config: &SynthConfig) -> Vec<SynthProject> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.projects)
        .map(|i| {
            let defective = i % 2 == 0;
            let minimal = !defective && rng.gen_bool(config.minimal_rate);
            let cross = !minimal && rng.gen_bool(config.cross_contract_rate);
            let mut b = Builder { next_id: 1 };
            let mut documents = Vec::new();
            let mut vault = vault_unit(&mut b, &mut rng, defective, minimal, cross);
            assign_spans(&mut vault, &mut 0);
            documents.push(SynthDocument { file_name: "Vault.ast.json".into(), ast: vault });
            if cross {
                let mut token = token_unit(&mut b);
                assign_spans(&mut token, &mut 0);
                documents.push(SynthDocument { file_name: "Token.ast.json".into(), ast: token });
            }
            let categories = if defective {
                [*DefectCategory::ALL.choose(&mut rng).expect("non-empty")].into_iter().collect()
            } else {
                Default::default()
            };
            SynthProject {
                project_id: format!("p{i:04}"),
                meta: ProjectMeta { label: Some(defective), categories },
                documents,
            }
        })
        .collect()
}

/// Writes each project as `<dir>/<project_id>/` with its AST files and
/// `project.json`. Returns the project directories.
pub fn write_corpus(projects: &[SynthProject], dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in projects {
        let pdir = dir.join(&p.project_id);
        std::fs::create_dir_all(&pdir)?;
        for d in &p.documents {
            std::fs::write(pdir.join(&d.file_name), serde_json::to_string_pretty(&d.ast)? + "\n")?;
        }
        std::fs::write(pdir.join(PROJECT_META_FILE), serde_json::to_string_pretty(&p.meta)? + "\n")?;
        out.push(pdir);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse_ast_document, RawAstDocument};

    fn kinds(v: &Value) -> Vec<String> {
        let doc = RawAstDocument { source_unit_path: "x".into(), compiler_version: "0.8.0".into(), root: v.clone() };
        parse_ast_document(&doc).unwrap().nodes().iter().map(|n| n.kind.clone()).collect()
    }

    #[test]
    fn planted_kind_only_in_defective() {
        for p in generate_corpus(&SynthConfig { projects: 40, ..SynthConfig::default() }) {
            let has = p.documents.iter().any(|d| kinds(&d.ast).iter().any(|k| k == "FunctionCallOptions"));
            assert_eq!(has, p.meta.label == Some(true), "{}", p.project_id);
        }
    }

    #[test]
    fn deterministic() {
        let c = SynthConfig { projects: 10, ..SynthConfig::default() };
        assert_eq!(generate_corpus(&c), generate_corpus(&c));
    }

    #[test]
    fn spans_nest() {
        let p = &generate_corpus(&SynthConfig { projects: 1, ..SynthConfig::default() })[0];
        let doc = RawAstDocument { source_unit_path: "x".into(), compiler_version: "0.8.0".into(), root: p.documents[0].ast.clone() };
        let tree = parse_ast_document(&doc).unwrap();
        for n in tree.nodes() {
            assert!(n.src_span.length > 0);
            if let Some(parent) = tree.parent(n) {
                assert!(parent.src_span.offset <= n.src_span.offset && n.src_span.end() <= parent.src_span.end());
            }
        }
    }
}
