#![allow(dead_code)]

pub mod arima_dense;
pub mod dense_gaussian;
pub mod finite_diff;
pub mod quadrature;
pub mod races;

pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
