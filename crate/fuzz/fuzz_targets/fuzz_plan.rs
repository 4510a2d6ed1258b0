#![no_main]

use libfuzzer_sys::fuzz_target;
use qswitch::protocols::ProtocolPlan;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(plan) = ProtocolPlan::from_toml(text) else {
        return;
    };
    let again = ProtocolPlan::from_toml(&plan.to_toml().expect("plan serializes")).expect("plan reparses");
    assert_eq!(again, plan);
});
