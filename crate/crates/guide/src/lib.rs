//! mdbook cannot link external crates when it tests a book, so each chapter
//! is included here as a doc comment and `cargo test --doc` runs its code.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/reviews.md")]
mod reviews {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/text-preparation.md")]
mod text_preparation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/topic-models.md")]
mod topic_models {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/reports.md")]
mod reports {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/crawling.md")]
mod crawling {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/store.md")]
mod store {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service-and-cli.md")]
mod service_and_cli {}
