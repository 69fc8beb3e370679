use crate::error::{Error, Result};

/// Structured in-context prompt asking for `k` fine-grained categories
/// related to `class_name`. The worked example (sports car) is fixed.
pub fn build_prompt(class_name: &str, k: usize) -> Result<String> {
    let class_name = class_name.trim();
    if class_name.is_empty() {
        return Err(Error::config("class name for the prompt is empty"));
    }
    Ok(format!(
        "Task: Given a category name, please list out {k} classes that are fine-grained categories related to the provided classes.\n\
         \n\
         Query: sports car\n\
         \n\
         Response: sedan, coupe, SUV, luxury car, electric car\n\
         \n\
         Query: {class_name}\n\
         \n\
         Response:"
    ))
}
