use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;

use super::article::{json_lines, str_field, time_field, ArticleIdx, Catalog};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Web,
    App,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Desktop,
    Mobile,
    Tablet,
}

impl Platform {
    pub const ALL: [Platform; 2] = [Platform::Web, Platform::App];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "web" => Some(Platform::Web),
            "app" => Some(Platform::App),
            _ => None,
        }
    }
}

impl Device {
    pub const ALL: [Device; 3] = [Device::Desktop, Device::Mobile, Device::Tablet];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desktop" => Some(Device::Desktop),
            "mobile" => Some(Device::Mobile),
            "tablet" => Some(Device::Tablet),
            _ => None,
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Platform::Web => "web",
            Platform::App => "app",
        })
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Device::Desktop => "desktop",
            Device::Mobile => "mobile",
            Device::Tablet => "tablet",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClickEvent {
    pub user_id: String,
    pub article: ArticleIdx,
    /// Epoch seconds.
    pub ts: i64,
    pub platform: Platform,
    pub device: Device,
}

/// One line of the clicks file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClickRecord {
    pub user_id: String,
    pub article_id: String,
    pub ts: i64,
    pub platform: Platform,
    pub device: Device,
}

/// Reads the line-delimited clicks file; every article must be in `catalog`.
pub fn parse_clicks(reader: impl BufRead, catalog: &Catalog) -> Result<Vec<ClickEvent>> {
    let mut clicks = Vec::new();
    for item in json_lines(reader) {
        let (line, obj) = item?;
        let user_id = match obj.get("user_id") {
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => str_field(&obj, "user_id", line)?.to_string(),
        };
        let article_id = str_field(&obj, "article_id", line)?;
        let ts = time_field(&obj, "ts", line)?;
        let platform_s = str_field(&obj, "platform", line)?;
        let device_s = str_field(&obj, "device", line)?;
        let article = catalog
            .resolve(article_id)
            .ok_or_else(|| Error::parse(line, format!("unknown article_id `{article_id}`")))?;
        let platform = Platform::parse(platform_s)
            .ok_or_else(|| Error::parse(line, format!("unknown platform `{platform_s}`")))?;
        let device = Device::parse(device_s)
            .ok_or_else(|| Error::parse(line, format!("unknown device `{device_s}`")))?;
        clicks.push(ClickEvent {
            user_id,
            article,
            ts,
            platform,
            device,
        });
    }
    Ok(clicks)
}

pub fn write_clicks(records: &[ClickRecord], mut w: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Stable sort into the `(user, ts)` order expected by [`super::sessionize`].
pub fn sort_by_user_time(clicks: &mut [ClickEvent]) {
    clicks.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.ts.cmp(&b.ts)));
}
