//! The builtin scenario library. Every builtin is assembled through
//! [`ScenarioBuilder`], so it passes the same checks as a loaded file.

use crate::decision::Disposition;
use crate::scenario::{ScenarioBuilder, ScenarioError, ScenarioSpec};

/// Builtin names, in listing order.
pub const BUILTIN_NAMES: &[&str] = &[
    "filelock",
    "filelock-escalate",
    "rbac-revoke",
    "opa-quota",
    "opa-quota-store",
    "cedar-quota",
    "iam-bucket",
    "k8s-quota",
];

/// One-line summary per builtin, for listings.
pub fn builtin_summary(name: &str) -> Option<&'static str> {
    Some(match name {
        "filelock" => "write(f) admitted while unlocked and under quota; the environment may lock f",
        "filelock-escalate" => "filelock with escalation to a supervisor at quota 1",
        "rbac-revoke" => "write(r) admitted for editors; the environment may revoke the role",
        "opa-quota" => "write admitted under quota; a burst of other tenants may exhaust it",
        "opa-quota-store" => "opa-quota with the decision reading a mirrored usage store",
        "cedar-quota" => "quota check in the style of an embedded policy engine; same shape as opa-quota",
        "iam-bucket" => "write admitted while the bucket policy permits; the policy may be changed",
        "k8s-quota" => "pod creation checked against object spec and namespace quota",
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    match name {
        "filelock" => filelock(name, None),
        "filelock-escalate" => filelock(name, Some(("quota", "1"))),
        "rbac-revoke" => rbac_revoke(),
        "opa-quota" | "cedar-quota" => quota(name, false),
        "opa-quota-store" => quota(name, true),
        "iam-bucket" => iam_bucket(),
        "k8s-quota" => k8s_quota(),
        _ => Err(ScenarioError::UnknownBuiltin(name.to_string())),
    }
}

fn filelock(name: &str, escalate_when: Option<(&str, &str)>) -> Result<ScenarioSpec, ScenarioError> {
    let mut b = ScenarioBuilder::new(name);
    b.attr("locked", &["none", "f"])?;
    b.attr("quota", &["0", "1", "2"])?;
    b.product_states()?;
    b.agent("write(f)")?;
    b.env("lock(f)")?;
    b.initial("s0");
    b.tabulate_adm("write(f)", |s| s.get("locked") == "none" && s.get("quota") != "2")?;
    b.decide_from_adm(escalate_when.as_slice());
    b.tabulate_trans("write(f)", |s| {
        let q: u32 = s.get("quota").parse().unwrap();
        vec![("quota", (q + 1).min(2).to_string())]
    })?;
    b.tabulate_env("lock(f)", |_| Some(vec![("locked", "f".to_string())]))?;
    b.partition(&[], &["locked", "quota"], &["locked", "quota"]);
    b.build()
}

fn rbac_revoke() -> Result<ScenarioSpec, ScenarioError> {
    let mut b = ScenarioBuilder::new("rbac-revoke");
    b.attr("role", &["editor", "none"])?;
    b.attr("resource", &["clean", "written"])?;
    b.product_states()?;
    b.agent("write(r)")?;
    b.env("revoke")?;
    b.initial("s0");
    b.tabulate_adm("write(r)", |s| s.get("role") == "editor")?;
    b.decide_from_adm(&[]);
    b.tabulate_trans("write(r)", |_| vec![("resource", "written".to_string())])?;
    b.tabulate_env("revoke", |s| (s.get("role") == "editor").then(|| vec![("role", "none".to_string())]))?;
    b.partition(&[], &["role", "resource"], &["role"]);
    b.build()
}

fn quota(name: &str, store: bool) -> Result<ScenarioSpec, ScenarioError> {
    let mut b = ScenarioBuilder::new(name);
    b.attr("used", &["0", "1", "2"])?;
    b.product_states()?;
    b.agent("write")?;
    b.env("burst")?;
    b.initial("s0");
    b.tabulate_adm("write", |s| s.get("used") != "2")?;
    b.decide_from_adm(&[]);
    b.tabulate_trans("write", |s| {
        let u: u32 = s.get("used").parse().unwrap();
        vec![("used", (u + 1).min(2).to_string())]
    })?;
    b.tabulate_env("burst", |s| (s.get("used") != "2").then(|| vec![("used", "2".to_string())]))?;
    if store {
        let values = ["0", "1", "2"];
        b.external_values(&values)?;
        let rows: Vec<(String, String)> = b
            .state_views()
            .iter()
            .map(|v| (v.name().to_string(), v.get("used").to_string()))
            .collect();
        for (s, used) in rows {
            b.ext_read(&s, &used)?;
            for v in values {
                let d = if v == "2" {
                    Disposition::Refuse
                } else {
                    Disposition::Allow
                };
                b.ext_decide(&s, "write", v, d)?;
            }
        }
        for v in values {
            b.ext_effect("burst", v, "2")?;
        }
    }
    b.partition(&[], &["used"], &["used"]);
    b.build()
}

fn iam_bucket() -> Result<ScenarioSpec, ScenarioError> {
    let mut b = ScenarioBuilder::new("iam-bucket");
    b.attr("acl", &["permit", "deny"])?;
    b.attr("object", &["absent", "present"])?;
    b.product_states()?;
    b.agent("put-object")?;
    b.env("change-bucket-policy")?;
    b.initial("s0");
    b.tabulate_adm("put-object", |s| s.get("acl") == "permit")?;
    b.decide_from_adm(&[]);
    b.tabulate_trans("put-object", |_| vec![("object", "present".to_string())])?;
    b.tabulate_env("change-bucket-policy", |s| {
        (s.get("acl") == "permit").then(|| vec![("acl", "deny".to_string())])
    })?;
    b.partition(&["object"], &["acl"], &["acl"]);
    b.build()
}

fn k8s_quota() -> Result<ScenarioSpec, ScenarioError> {
    let mut b = ScenarioBuilder::new("k8s-quota");
    b.attr("spec", &["valid", "invalid"])?;
    b.attr("quota", &["avail", "exhausted"])?;
    b.attr("pod", &["none", "created"])?;
    b.product_states()?;
    b.agent("create-pod")?;
    b.env("mutate-object")?;
    b.env("update-quota")?;
    b.initial("s0");
    b.tabulate_adm("create-pod", |s| s.get("spec") == "valid" && s.get("quota") == "avail")?;
    b.decide_from_adm(&[]);
    b.tabulate_trans("create-pod", |_| vec![("pod", "created".to_string())])?;
    b.tabulate_env("mutate-object", |s| {
        (s.get("spec") == "valid").then(|| vec![("spec", "invalid".to_string())])
    })?;
    b.tabulate_env("update-quota", |s| {
        (s.get("quota") == "avail").then(|| vec![("quota", "exhausted".to_string())])
    })?;
    b.partition(&["spec", "pod"], &["quota"], &["spec", "quota"]);
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{check_consistency, check_nontriviality};

    #[test]
    fn every_builtin_builds_consistent_and_nontrivial() {
        for name in BUILTIN_NAMES {
            let sc = builtin(name).unwrap();
            assert_eq!(&sc.name, name);
            assert!(check_consistency(&sc.decision, &sc.adm).unwrap().is_consistent(), "{name}");
            assert!(check_nontriviality(&sc).passes(), "{name}");
            assert!(builtin_summary(name).is_some());
        }
    }

    #[test]
    fn filelock_shape() {
        let sc = builtin("filelock").unwrap();
        assert_eq!(sc.states.len(), 6);
        assert_eq!(sc.describe_state(sc.initial), "s0{locked=none, quota=0}");
        assert_eq!(sc.env_transitions.len(), 6);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert_eq!(builtin("nope"), Err(ScenarioError::UnknownBuiltin("nope".into())));
    }
}
