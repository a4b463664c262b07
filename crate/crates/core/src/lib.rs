pub mod client;
pub mod embedding;
pub mod generation;
pub mod lattice;
pub mod layout;
pub mod retry;
pub mod segment;
pub mod session;
pub mod similarity;
pub mod stopwords;
