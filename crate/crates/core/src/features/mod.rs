//! Feature naming, tables and preprocessing.

pub mod csvio;
pub mod names;
pub mod prep;
pub mod table;

pub use csvio::{parse_csv, read_csv, to_csv_string, write_csv};
pub use names::{default_registry, registry, FeatureName, KindSel, Param, UnknownFeature};
pub use prep::{draw_controls, filter_gradable, stratified_split, FilterReport, MedianImputer, MinMaxScaler};
pub use table::{Disease, FeatureTable, GradeSchema, Record, Split, TableError};
