//! Runs the guide's code blocks as doc-tests; see the book/ directory.
