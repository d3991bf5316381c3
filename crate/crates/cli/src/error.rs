use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    /// Required artifacts missing or inconsistent.
    Input,
    Compute,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Input => "input",
            Category::Compute => "compute",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Io => 3,
            Category::Input => 4,
            Category::Compute => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category.name(), self.message)
    }
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Category::Input, message)
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::new(Category::Io, format!("{}: {e}", path.display()))
    }
}

impl From<isal_core::Error> for CliError {
    fn from(e: isal_core::Error) -> Self {
        Self::new(Category::Compute, e.to_string())
    }
}
