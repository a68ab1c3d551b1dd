from pathlib import Path
from typing import Any, Optional, Union

import boto3


class StorageService:
    """
    Writes and reads run artifacts, either on the local disk or in an S3 bucket.
    """

    def __init__(self) -> None:
        self._s3_client: Optional[Any] = None

    @property
    def s3_client(self) -> Any:
        # Created on first use so local-only runs need no AWS configuration.
        if self._s3_client is None:
            self._s3_client = boto3.client("s3")
        return self._s3_client

    @staticmethod
    def _s3_key(file_path: str) -> str:
        # Bare file names go under the 'outputs' prefix.
        key = file_path.replace("\\", "/")
        if "/" not in key:
            key = f"outputs/{key}"
        return key

    def save(
        self,
        content: Union[str, bytes],
        file_path: str,
        target: str = "local",
        s3_bucket: Optional[str] = None,
    ) -> None:
        """
        Saves content to a local file path or an S3 object.

        Args:
            content: Text (written as UTF-8) or raw bytes.
            file_path: The local file path or S3 object key.
            target: The storage target, either "local" or "s3".
            s3_bucket: Bucket to upload to when target is "s3".
        """
        body = content.encode("utf-8") if isinstance(content, str) else content
        if target == "s3":
            if not s3_bucket:
                raise ValueError("s3_bucket must be provided for S3 target.")
            self.s3_client.put_object(
                Bucket=s3_bucket, Key=self._s3_key(file_path), Body=body
            )
        elif target == "local":
            path = Path(file_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(body)
        else:
            raise ValueError(f"Unknown storage target: {target}")

    def load(
        self,
        file_path: str,
        target: str = "local",
        s3_bucket: Optional[str] = None,
    ) -> str:
        """Reads back an artifact saved with `save`, as text."""
        if target == "s3":
            if not s3_bucket:
                raise ValueError("s3_bucket must be provided for S3 target.")
            response = self.s3_client.get_object(
                Bucket=s3_bucket, Key=self._s3_key(file_path)
            )
            return str(response["Body"].read().decode("utf-8"))
        if target != "local":
            raise ValueError(f"Unknown storage target: {target}")
        return Path(file_path).read_text(encoding="utf-8")
