pub mod ap_oracle;
