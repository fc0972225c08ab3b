//! Experiment pipelines behind the command-line driver.
