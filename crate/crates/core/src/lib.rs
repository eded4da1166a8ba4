pub mod axp;
pub mod bench;
pub mod hier;
pub mod logic;
pub mod mus;
pub mod neural;
pub mod shap;
pub mod tasks;
pub mod verify;
