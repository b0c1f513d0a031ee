use std::io;
use std::net::SocketAddr;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use smsl_core::dispatcher::DispatchError;
use thiserror::Error;

/// Failures that stop the service from starting.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: io::Error },
    #[error("event log: {0}")]
    EventLog(#[from] io::Error),
    #[error("server: {0}")]
    Server(io::Error),
    #[error("cannot restore session {session}: {message}")]
    Restore { session: String, message: String },
}

/// Error answer to a request. Serialized as `{"error": kind, "message": text}`.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no session {0:?}")]
    UnknownSession(String),
    #[error("no branch {0:?}")]
    UnknownBranch(String),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("no handler is waiting for confirmation {0:?}")]
    NoPendingConfirmation(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "UnknownSession",
            ApiError::UnknownBranch(_) => "UnknownBranch",
            ApiError::NoPendingConfirmation(_) => "NoPendingConfirmation",
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::Internal(_) => "Internal",
            ApiError::Dispatch(e) => match e {
                DispatchError::UnknownState(_) => "UnknownState",
                DispatchError::UnknownEdge(_) => "UnknownEdge",
                DispatchError::WrongSource { .. } => "WrongSource",
                DispatchError::EdgePruned(_) => "EdgePruned",
                DispatchError::ProposalPending(_) => "ProposalPending",
                DispatchError::UnknownProposal(_) => "UnknownProposal",
                DispatchError::AlreadyDecided(_) => "AlreadyDecided",
                DispatchError::NotApproved => "NotApproved",
                DispatchError::MissingOperation(_) => "MissingOperation",
                DispatchError::PreCheckFailed { .. } => "PreCheckFailed",
                DispatchError::FlagBlocked => "FlagBlocked",
                DispatchError::PlanMismatch { .. } => "PlanMismatch",
                DispatchError::DuplicateName(_) => "DuplicateName",
                DispatchError::Replay(_) => "Replay",
                DispatchError::Monitor(_) => "Monitor",
            },
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::UnknownBranch(_) => StatusCode::NOT_FOUND,
            ApiError::NoPendingConfirmation(_) => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Dispatch(e) => match e {
                DispatchError::UnknownState(_) | DispatchError::UnknownEdge(_) | DispatchError::UnknownProposal(_) => {
                    StatusCode::NOT_FOUND
                }
                DispatchError::Replay(_) | DispatchError::Monitor(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::CONFLICT,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}
