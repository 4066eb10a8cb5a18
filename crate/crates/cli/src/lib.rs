//! Front ends for the guidance engine: the `wayguide` command and the
//! WebSocket service that the steering UI talks to.

pub mod protocol;
pub mod serve;
