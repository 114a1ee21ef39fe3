//! Prompt generation, teacher querying and template refinement.

mod collect;
mod mutate;
mod refine;
mod teacher;
mod template;

pub use collect::{collect_responses, Backoff, CollectError, CollectFailure, CollectOptions, CollectOutcome};
pub use mutate::{mutate_adversarial, MutationError, MutationStrategy};
pub use refine::{refine_templates, RefinementReport, TemplateStats};
pub use teacher::{
    FinishReason, HttpTeacher, MockTeacher, Teacher, TeacherError, TeacherRequest, TeacherResponse, API_KEY_ENV,
};
pub use template::{
    generate_prompts, load_slots, load_templates, save_templates, validate_templates, GeneratedPrompt, PromptTemplate,
    SlotValues, TemplateError, TemplateKind,
};
