//! Expressive piano performance from quantized scores.
//!
//! A score is parsed from a Standard MIDI File ([`midi`]), quantized onto a
//! sixteenth-note grid of binary note states ([`roll`]), and passed through a
//! shared bidirectional-LSTM interpretation layer followed by a per-genre
//! stack of three bidirectional LSTMs and a linear head ([`model`]). The model
//! predicts a velocity for every note onset, which is written back into the
//! original file. [`corpus`] curates genre-labelled training sets, [`nn`]
//! holds the numerical building blocks, and [`cli`] wires everything into the
//! `stylenet` command.

pub mod cli;
pub mod corpus;
pub mod midi;
pub mod model;
pub mod nn;
pub mod roll;
pub mod synth;
