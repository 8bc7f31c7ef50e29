//! Proptest strategies for action calls.

use proptest::prelude::*;
use webgym_core::actions::{build_catalog, ActionCall, ActionSet, ArgValue, ParamKind};

pub fn text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[ -~\\n\\t\\\\\"'éß漢🙂]{0,30}").unwrap()
}

pub fn arg(kind: ParamKind) -> BoxedStrategy<ArgValue> {
    match kind {
        ParamKind::Bid => "[a-zA-Z]{0,3}[0-9]{1,4}".prop_map(ArgValue::Str).boxed(),
        ParamKind::Text => text().prop_map(ArgValue::Str).boxed(),
        ParamKind::Number => prop_oneof![
            (-5000i64..5000).prop_map(|n| n as f64),
            (-5_000_000i64..5_000_000).prop_map(|n| n as f64 / 1000.0),
        ]
        .prop_map(ArgValue::Num)
        .boxed(),
        ParamKind::Index => (0u32..50).prop_map(|n| ArgValue::Num(n as f64)).boxed(),
        ParamKind::Button => prop::sample::select(vec!["left", "middle", "right"])
            .prop_map(|s| ArgValue::Str(s.into()))
            .boxed(),
        ParamKind::Key => prop::sample::select(vec!["Enter", "Control+a", "Shift+Tab", "Meta+Shift+k", "a"])
            .prop_map(|s| ArgValue::Str(s.into()))
            .boxed(),
        ParamKind::Options => prop_oneof![
            text().prop_map(ArgValue::Str),
            prop::collection::vec(text(), 1..4).prop_map(ArgValue::List),
        ]
        .boxed(),
    }
}

/// A random well-formed call of some primitive of the full catalog.
pub fn call() -> impl Strategy<Value = ActionCall> {
    let catalog = build_catalog(ActionSet::BidCoord, true);
    prop::sample::select(catalog.primitives).prop_flat_map(|prim| {
        let required = prim.required_arity();
        let total = prim.params.len();
        (required..=total).prop_flat_map(move |n| {
            let args: Vec<_> = prim.params[..n].iter().map(|p| arg(p.kind)).collect();
            let name = prim.name;
            args.prop_map(move |args| ActionCall::new(name, args))
        })
    })
}
