//! Temporal Datalog programs: parsing, validation, parameter layout and a
//! deductive database that evolves under events.

pub mod ast;
pub mod desugar;
pub mod engine;
pub mod error;
pub mod lexer;
pub mod naive;
pub mod params;
pub mod parser;
pub mod program;

pub use ast::{sym, Ast, Atom, BodyElement, DeclKind, Declaration, GroundAtom, Item, Pos, Rule, RuleKind, Symbol, Term};
pub use desugar::desugar_highways;
pub use engine::{
    apply_updates, init_event, init_state, match_updates, possible_events, DatabaseState, EngineConfig, FactSet,
    Polarity, ProofInstantiation, Proofs, Transition, UpdateMatch,
};
pub use error::{EngineError, ParseError, ParseErrorKind, ProgramError, ValidationError};
pub use params::{resolve_parameters, ParameterLayout, RuleParams, Signature, SignatureRole, SlotWeight, TimeMode, WeightLayout};
pub use parser::{parse_ground_atom, parse_program};
pub use program::{validate, ArgSlot, CompiledRule, Pattern, PositiveCondition, Program, INIT};
