//! Simulated hardware: camera and speaker.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use async_trait::async_trait;

use crate::error::{Error, Result, StorageError};
use crate::providers::{ImageMime, SpeechAudio, VisionRequest};

#[async_trait]
pub trait CameraSource: Send + Sync {
    async fn capture(&self) -> Result<VisionRequest>;
}

/// Loads an image file and infers its type from magic bytes or extension.
pub fn load_image(path: &Path) -> Result<VisionRequest> {
    let bytes = std::fs::read(path).map_err(|e| StorageError::io(path, e))?;
    let name = path.file_name().and_then(|n| n.to_str());
    let mime = ImageMime::detect(&bytes, name)
        .ok_or_else(|| Error::usage(format!("{} is not a JPEG or PNG image", path.display())))?;
    VisionRequest::new(bytes, mime)
}

/// Returns the same fixture file on every capture.
pub struct FixtureCamera {
    path: PathBuf,
}

impl FixtureCamera {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

#[async_trait]
impl CameraSource for FixtureCamera {
    async fn capture(&self) -> Result<VisionRequest> {
        load_image(&self.path).map_err(|e| Error::Camera(e.to_string()))
    }
}

/// A portal without a camera; awakening requires an injected image.
pub struct NoCamera;

#[async_trait]
impl CameraSource for NoCamera {
    async fn capture(&self) -> Result<VisionRequest> {
        Err(Error::Camera("no camera configured".into()))
    }
}

pub struct StaticCamera(pub VisionRequest);

#[async_trait]
impl CameraSource for StaticCamera {
    async fn capture(&self) -> Result<VisionRequest> {
        Ok(self.0.clone())
    }
}

#[async_trait]
pub trait AudioSink: Send + Sync {
    async fn play(&self, audio: &SpeechAudio) -> Result<()>;
}

pub struct NullAudio;

#[async_trait]
impl AudioSink for NullAudio {
    async fn play(&self, _audio: &SpeechAudio) -> Result<()> {
        Ok(())
    }
}

/// Keeps every clip that was played.
#[derive(Default)]
pub struct RecordingAudio {
    clips: Mutex<Vec<SpeechAudio>>,
}

impl RecordingAudio {
    pub fn clips(&self) -> Vec<SpeechAudio> {
        self.clips.lock().unwrap().clone()
    }
}

#[async_trait]
impl AudioSink for RecordingAudio {
    async fn play(&self, audio: &SpeechAudio) -> Result<()> {
        self.clips.lock().unwrap().push(audio.clone());
        Ok(())
    }
}
