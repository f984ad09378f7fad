pub mod eval;
pub mod gateway;
pub mod index;
pub mod keywords;
pub mod osn;
pub mod pca;
pub mod similarity;
pub mod text;
pub mod tracking;
pub mod verdict;
